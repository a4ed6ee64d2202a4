class Summary:
    def __init__(self):
        self.total = 0
        self.bands = {}

    def add(self, band):
        self.total += 1
        self.bands[band] = self.bands.get(band, 0) + 1

    def describe(self):
        parts = []
        for band in sorted(self.bands):
            parts.append("%s=%d" % (band, self.bands[band]))
        return ", ".join(parts)


def format_money(amount):
    return "${:,.2f}".format(amount)
