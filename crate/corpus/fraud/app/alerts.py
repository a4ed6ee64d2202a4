class QueueFull(Exception):
    pass


class Alert:
    def __init__(self, txn_id, holder, score):
        self.txn_id = txn_id
        self.holder = holder
        self.score = score

    def headline(self):
        return "alert " + str(self.txn_id) + " score " + str(self.score)


class AlertQueue:
    def __init__(self, limit):
        self.limit = limit
        self.items = []

    def push(self, alert):
        if len(self.items) >= self.limit:
            raise QueueFull("limit %d reached" % self.limit)
        self.items.append(alert)

    def drain(self):
        out = self.items
        self.items = []
        return out
