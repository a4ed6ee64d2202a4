import logging

log = logging.getLogger(__name__)

MAX_TENURE = 72


def clamp(value, low, high):
    return max(low, min(value, high))


def build(row, use):
    tenure = clamp(row["tenure"], 0, MAX_TENURE)
    minutes = use["minutes"]
    charges = round(row["monthly_charges"], 1)
    if use["support_calls"] > 3:
        log.info("frequent caller %s: %d calls", row["phone"], use["support_calls"])
    return {"tenure": tenure, "minutes": minutes, "charges": charges}
