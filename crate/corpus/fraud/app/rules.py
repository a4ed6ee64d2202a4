HIGH_RISK_MERCHANTS = ("crypto-exchange", "gift-cards", "wire-transfer")


def amount_points(amount):
    if amount > 5000:
        return 2
    if amount > 1500:
        return 1
    return 0


def risk_score(txn, home):
    points = amount_points(txn["amount"])
    if txn["merchant"] in HIGH_RISK_MERCHANTS:
        points += 1
    if txn["country"] != home:
        points += 1
    return points


def card_reused(txn, txns):
    accounts = set()
    for other in txns:
        if other["card_number"] == txn["card_number"]:
            accounts.add(other["account"])
    if len(accounts) > 1:
        return True
    return False


def describe_amount(amount):
    return "EUR {:>10,.2f}".format(amount)
