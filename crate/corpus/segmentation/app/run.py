"""Clusters shoppers by spend and visit frequency."""

import logging

from tabular import read_csv

from segments.kmeans import KMeans
from segments.profile import describe, normalize

logger = logging.getLogger("segmentation")

PROFILES = "data/profiles.csv"


def load_profiles(path):
    profiles = []
    for row in read_csv(path):
        logger.debug("loaded profile %s from postcode %s", row["profile_id"], row["postcode"])
        profiles.append(normalize(row))
    logger.info("profiles normalized")
    return profiles


def report_segments(model, profiles):
    def label_for(center):
        if center[0] > 0.5:
            return "big-spender"
        if center[1] > 0.5:
            return "regular"
        return "occasional"

    names = [label_for(c) for c in model.centers]
    for idx, name in enumerate(names):
        logger.info("segment %d is %s", idx, name)
    for p in profiles:
        seg = model.assign(p["vector"])
        logger.info("profile %s -> segment %d (%s)", p["id"], seg, names[seg])
        if p["tier"] == "gold":
            logger.debug("gold member %s, age %d, postcode %s", describe(p), p["age"], p["postcode"])


def income_report(profiles):
    top = max(profiles, key=lambda p: p["income"])
    logger.info("highest income profile %s earns %d", top["id"], top["income"])
    total = sum(p["income"] for p in profiles)
    count = 0
    for _ in profiles:
        count += 1
    logger.info("mean income %.1f across %d profiles", total / count, count)
    seniors = [p for p in profiles if p["age"] >= 65]
    for p in seniors:
        logger.info(f"senior profile {p['id']}: {p['name']!s} ({p['age']})")


def main():
    logging.basicConfig(level=logging.DEBUG)
    profiles = load_profiles(PROFILES)
    model = KMeans(3, iterations=8)
    model.fit([p["vector"] for p in profiles])
    for i, center in enumerate(model.centers):
        logger.info("center %d: spend=%.3f visits=%.3f", i, center[0], center[1])
    report_segments(model, profiles)
    income_report(profiles)


if __name__ == "__main__":
    main()
