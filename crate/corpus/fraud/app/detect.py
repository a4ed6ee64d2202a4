"""Screens card transactions and escalates suspicious ones."""

import logging

from tabular import read_csv

import rules
from alerts import Alert, AlertQueue, QueueFull

log = logging.getLogger("fraud")

HOME_COUNTRY = "NL"
LARGE_PAYMENT = 2500


def find_holder(holders, account):
    for h in holders:
        if h["account"] == account:
            return h
    return None


def screen(txns, holders, queue):
    for t in txns:
        holder = find_holder(holders, t["account"])
        score = rules.risk_score(t, HOME_COUNTRY)
        log.debug("txn %s amount=%.2f merchant=%s country=%s", t["txn_id"], t["amount"], t["merchant"], t["country"])
        if score >= 2:
            alert = Alert(t["txn_id"], holder["holder"], score)
            queue.push(alert)
            log.warning("flagged txn %s for %s (score %d)", t["txn_id"], alert.holder, alert.score)
            if rules.card_reused(t, txns):
                log.error("card %s reused across accounts", t["card_number"])
        if t["amount"] > LARGE_PAYMENT:
            log.info("large payment by {name} from {ip}".format(name=holder["holder"], ip=t["ip"]))
            log.info("identity check for account %s: ssn=%s dob=%s", t["account"], holder["ssn"], holder["dob"])
        if t["country"] != HOME_COUNTRY:
            log.debug(f"foreign txn {t['txn_id']} via {t['ip']!r} in {t['country']}")


def velocity(txns):
    counts = {}
    for t in txns:
        acct = t["account"]
        if acct in counts:
            counts[acct] = counts[acct] + 1
        else:
            counts[acct] = 1
    busiest = sorted(txns, key=lambda t: t["amount"], reverse=True)[:3]
    for t in busiest:
        log.info("velocity check %s: %s" % (t["account"], rules.describe_amount(t["amount"])))


def main():
    logging.basicConfig(level=logging.DEBUG)
    txns = read_csv("data/transactions.csv")
    holders = read_csv("data/cardholders.csv")
    log.info("screening started")
    queue = AlertQueue(40)
    try:
        screen(txns, holders, queue)
    except QueueFull:
        log.error("alert queue overflowed; remaining transactions skipped")
    for alert in queue.drain():
        log.info(alert.headline())
        log.info("escalating to %s", alert.holder)
    velocity(txns)
    log.info("screening finished")


if __name__ == "__main__":
    main()
