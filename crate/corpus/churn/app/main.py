"""Scores customers for churn risk and queues retention offers."""

import logging

from tabular import read_csv

import features
from model import ChurnModel, band_for
from report import Summary, format_money

log = logging.getLogger("churn")

CUSTOMERS = "data/customers.csv"
USAGE = "data/usage.csv"
WEIGHTS = {"tenure": -0.08, "minutes": 0.004, "charges": 0.035}


def load_customers():
    rows = read_csv(CUSTOMERS)
    log.info("customer table loaded")
    return rows


def load_usage():
    return read_csv(USAGE)


def contact_line(row):
    email = row["email"]
    phone = row["phone"]
    return "email=" + email + " phone=" + phone


def score_customers(customers, usage, model):
    results = []
    for row, use in zip(customers, usage):
        cid = row["customer_id"]
        name = row["name"]
        feats = features.build(row, use)
        score = model.score(feats)
        band = band_for(score)
        log.info("customer %s scored %.2f", name, score)
        log.debug("customer %d features tenure=%d minutes=%d", cid, feats["tenure"], feats["minutes"])
        if band == "high":
            log.warning("high churn risk for {} (band {})".format(name, band))
            log.info("contact for customer %d: %s", cid, contact_line(row))
        if use["last_ticket"]:
            log.debug("ticket note for customer %d: %r", cid, use["last_ticket"])
        results.append({"id": cid, "name": name, "email": row["email"], "score": score, "band": band})
    return results


def notify(results):
    sent = 0
    for r in results:
        if r["band"] == "high":
            log.info(f"queued retention offer for {r['email']} at score {r['score']:.3f}")
            sent += 1
    log.info("retention offers queued: %d", sent)
    return sent


def main():
    logging.basicConfig(level=logging.DEBUG)
    customers = load_customers()
    usage = load_usage()
    model = ChurnModel(WEIGHTS, -1.5)
    results = score_customers(customers, usage, model)
    notify(results)
    summary = Summary()
    for r in results:
        summary.add(r["band"])
    log.info("scored %d customers: %s", summary.total, summary.describe())
    for row in customers:
        if row["monthly_charges"] > 95:
            log.info("premium plan holder %s pays %s per month", row["name"], format_money(row["monthly_charges"]))


if __name__ == "__main__":
    main()
