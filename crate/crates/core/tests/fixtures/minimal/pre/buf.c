#include <stdlib.h>

char *make_buf(size_t n)
{
	char *p = malloc(n);
	p[0] = 0;
	return p;
}
