"""Build the two demo sources and a ready-to-serve config.

gemstore is a diamond-shop-like catalog where round carat values cluster
heavily (a natural dense region); homefinder is a small listings table with
a lexicographic system order. Both are deterministic, so the files can be
regenerated at any time without invalidating a dense store built on top.

Usage: python scripts/make_demo_sources.py [--out demo]
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from rankgate.model import (
    CATEGORICAL,
    NUMERIC_CONTINUOUS,
    NUMERIC_DISCRETE,
    AttributeSchema,
    Tuple,
)
from rankgate.source import (
    SimulatorConfig,
    SystemRanking,
    write_dataset,
    write_schema_doc,
)

CUTS = ("fair", "good", "very-good", "premium", "ideal")
COLORS = ("D", "E", "F", "G", "H", "I", "J")
CLARITIES = ("I1", "SI2", "SI1", "VS2", "VS1", "VVS2", "VVS1", "IF")
SHAPES = ("round", "princess", "cushion", "oval", "emerald", "pear")
ZIPS = ("98103", "98115", "98117", "98199", "98107")


def gemstore(rng: random.Random, n: int = 1500):
    schemas = {
        "price": AttributeSchema("price", NUMERIC_CONTINUOUS, 200.0, 25000.0),
        "carat": AttributeSchema("carat", NUMERIC_CONTINUOUS, 0.2, 3.0),
        "depth": AttributeSchema("depth", NUMERIC_CONTINUOUS, 50.0, 75.0),
        "table": AttributeSchema("table", NUMERIC_CONTINUOUS, 50.0, 70.0),
        "cut": AttributeSchema("cut", CATEGORICAL, categories=CUTS),
        "color": AttributeSchema("color", CATEGORICAL, categories=COLORS),
        "clarity": AttributeSchema("clarity", CATEGORICAL, categories=CLARITIES),
        "shape": AttributeSchema("shape", CATEGORICAL, categories=SHAPES),
    }
    rows = []
    for i in range(n):
        carat = round(rng.uniform(0.2, 3.0), 2)
        if rng.random() < 0.15:
            carat = rng.choice((0.5, 1.0, 1.5, 2.0))  # round sizes cluster
        base = 900.0 * (carat ** 1.8) * rng.uniform(0.6, 1.9)
        rows.append(Tuple(f"g{i:05d}", {
            "price": round(min(max(base, 200.0), 25000.0), 2),
            "carat": carat,
            "depth": round(rng.uniform(55.0, 70.0), 1),
            "table": round(rng.uniform(52.0, 65.0), 1),
            "cut": rng.choice(CUTS),
            "color": rng.choice(COLORS),
            "clarity": rng.choice(CLARITIES),
            "shape": rng.choice(SHAPES),
        }))
    system = SystemRanking.linear({"price": 0.8, "carat": -0.4})
    return schemas, rows, SimulatorConfig(k=10, system_ranking=system,
                                          dataset_path="dataset.csv")


def homefinder(rng: random.Random, n: int = 1200):
    schemas = {
        "price": AttributeSchema("price", NUMERIC_CONTINUOUS, 50_000.0, 2_500_000.0),
        "squarefeet": AttributeSchema("squarefeet", NUMERIC_CONTINUOUS, 300.0, 9000.0),
        "bedrooms": AttributeSchema("bedrooms", NUMERIC_DISCRETE, 0.0, 8.0,
                                    resolution=1.0),
        "zip": AttributeSchema("zip", CATEGORICAL, categories=ZIPS),
    }
    rows = []
    for i in range(n):
        beds = rng.randint(0, 8)
        sqft = round(rng.uniform(300.0, 9000.0), 0)
        price = round(min(max(sqft * rng.uniform(120.0, 450.0) + beds * 15000.0,
                              50_000.0), 2_500_000.0), 0)
        rows.append(Tuple(f"h{i:05d}", {
            "price": price,
            "squarefeet": sqft,
            "bedrooms": float(beds),
            "zip": rng.choice(ZIPS),
        }))
    system = SystemRanking.lexicographic([("bedrooms", "desc"), ("price", "asc")])
    return schemas, rows, SimulatorConfig(k=10, system_ranking=system,
                                          dataset_path="dataset.csv")


def write_source(out: Path, name: str, built) -> None:
    schemas, rows, cfg = built
    d = out / name
    d.mkdir(parents=True, exist_ok=True)
    write_dataset(d / "dataset.csv", schemas, rows)
    write_schema_doc(d / "schema.json", schemas)
    (d / "source.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="demo")
    args = ap.parse_args()
    out = Path(args.out)

    write_source(out, "gemstore", gemstore(random.Random(42)))
    write_source(out, "homefinder", homefinder(random.Random(43)))

    service = {
        "listen": {"host": "127.0.0.1", "port": 8180},
        "admin_token": "demo-admin",
        "session_expiry_s": 1800,
        "dense_store": "dense-store",
        "rate_limit": {"max_in_flight": 8, "min_gap_ms": 0},
        "sources": [
            {
                "id": "gemstore",
                "name": "Gem Store",
                "config": "gemstore/source.json",
                "schema": "gemstore/schema.json",
                "popular_functions": [
                    {"label": "value hunter",
                     "weights": {"price": 1.0, "carat": -0.1, "depth": -0.5}},
                    {"label": "biggest stone",
                     "weights": {"carat": -1.0, "price": 0.2}},
                    {"label": "cheapest",
                     "weights": {"price": 1.0}},
                ],
            },
            {
                "id": "homefinder",
                "name": "Home Finder",
                "config": "homefinder/source.json",
                "schema": "homefinder/schema.json",
                "popular_functions": [
                    {"label": "space for money",
                     "weights": {"price": 1.0, "squarefeet": -0.3}},
                    {"label": "most room",
                     "weights": {"squarefeet": -1.0}},
                ],
            },
        ],
    }
    (out / "service.json").write_text(
        json.dumps(service, indent=2) + "\n", encoding="utf-8")
    print(f"wrote demo sources under {out}/ (serve with: "
          f"rankgate serve --config {out}/service.json)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
