SPEND_SCALE = 5000.0
VISIT_SCALE = 60.0


def normalize(row):
    vector = [row["spend"] / SPEND_SCALE, row["visits"] / VISIT_SCALE]
    return {
        "id": row["profile_id"],
        "name": row["full_name"],
        "age": row["age"],
        "postcode": row["postcode"],
        "income": row["income"],
        "tier": row["loyalty_tier"],
        "vector": vector,
    }


def describe(profile):
    first, last = profile["name"].split(" ", 1)
    return "%s %s." % (first, last[0])
