#ifndef A_H
#define A_H
#define RATE_HZ 1000
int other(void);
#endif
