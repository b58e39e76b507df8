#include "a.h"

static int setup_clock(struct device *dev)
{
	struct clk *clk;
	int ret;

	clk = devm_clk_get(dev, "core");
	if (IS_ERR(clk))
		return PTR_ERR(clk);

	clk_prepare(clk);
	ret = clk_set_rate(clk, 1000000);
	if (ret)
		return ret;

	dev_info(dev, "clock ready\n");
	dev_dbg(dev, "rate set\n");
	dev_dbg(dev, "more logging\n");
	dev_dbg(dev, "and more\n");
	dev_dbg(dev, "padding line\n");
	dev_dbg(dev, "padding line 2\n");

	ret = clk_enable(clk);
	return ret;
}

int other(void)
{
	return 0;
}
