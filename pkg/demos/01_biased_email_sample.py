"""Walkthrough: querying a population you only have a biased sample of.

A statistics bureau publishes how many migrants live in each country and
how many use each email provider. The only row-level data we hold is a
sample of Yahoo users. CLOSED answers describe the sample, SEMI-OPEN
reweights it to the published marginals, and OPEN synthesizes the missing
AOL tuples outright.
"""

import tempfile
from pathlib import Path

import numpy as np

from openpop import Engine, TrainConfig

workdir = Path(tempfile.mkdtemp(prefix="openpop_demo_"))

# Published aggregate reports (the only population knowledge we have).
(workdir / "country_stats.csv").write_text(
    "country,reported_count\nUK,600\nFR,400\n", encoding="utf-8")
(workdir / "email_stats.csv").write_text(
    "email,reported_count\nYahoo,550\nAOL,450\n", encoding="utf-8")

# The biased row-level sample: only Yahoo users, skewed toward the UK.
rng = np.random.default_rng(0)
rows = ["country,email"]
rows += [f"{rng.choice(['UK', 'FR'], p=[0.75, 0.25])},Yahoo" for _ in range(120)]
(workdir / "yahoo_users.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

engine = Engine(seed=0, train_config=TrainConfig(
    coverage_weight=0.01, latent_dim=2, projections=16,
    batch_size=32, epochs=30, layers=(32, 32), seed=0))

script = f"""
CREATE TABLE CountryStats (country TEXT, reported_count INT);
CREATE TABLE EmailStats (email TEXT, reported_count INT);
INGEST CountryStats FROM '{workdir / "country_stats.csv"}';
INGEST EmailStats FROM '{workdir / "email_stats.csv"}';

CREATE GLOBAL POPULATION Migrants (country TEXT, email TEXT);
CREATE METADATA Migrants_ByCountry AS
  (SELECT country, reported_count FROM CountryStats);
CREATE METADATA Migrants_ByEmail AS
  (SELECT email, reported_count FROM EmailStats);

CREATE SAMPLE YahooUsers AS (SELECT * FROM Migrants WHERE email = 'Yahoo');
INGEST YahooUsers FROM '{workdir / "yahoo_users.csv"}';

SELECT CLOSED country, email, COUNT(*) FROM Migrants GROUP BY country, email;
SELECT SEMI-OPEN country, email, COUNT(*) FROM Migrants GROUP BY country, email;
SELECT OPEN country, email, COUNT(*) FROM Migrants GROUP BY country, email;
"""

closed, semi_open, open_world = engine.run_script(script)

print("CLOSED — raw sample counts (Yahoo only, UK-skewed):")
print(closed.to_text(), end="\n\n")

print("SEMI-OPEN — reweighted to the published marginals.")
print("Still no AOL groups: reweighting cannot invent tuples.")
print(semi_open.to_text(), end="\n\n")

print("OPEN — generated tuples fill in the AOL groups:")
print(open_world.to_text())
