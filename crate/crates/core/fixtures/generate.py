"""Regenerates the synthetic flight-request fixtures.

Output is deterministic; rerun with `python3 generate.py` from this directory.
"""
import random

CITIES = [
    "boston", "denver", "dallas", "memphis", "indianapolis", "atlanta", "pittsburgh", "baltimore",
    "philadelphia", "oakland", "seattle", "miami", "charlotte", "phoenix", "houston", "detroit",
    "milwaukee", "tampa", "washington", "orlando", "cleveland", "nashville",
    "salt lake city", "new york city", "san francisco", "los angeles", "fort worth", "kansas city",
    "las vegas", "san diego", "st louis", "long beach",
]
NAMES = [
    "john smith", "mary jones", "david brown", "linda garcia", "james miller", "susan davis",
    "robert wilson", "karen moore", "michael taylor", "nancy anderson", "paul thomas", "lisa jackson",
]
DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
MONTHS = ["january", "february", "march", "april", "may", "june", "july", "august"]
TIMES = ["8 am", "10 am", "noon", "2 pm", "5 pm", "7:30 pm", "6:15 am"]

TARGET = [
    "how much is the cheapest flight from {a} to {b}",
    "what is the fare from {a} to {b} on {day}",
    "show me the cheapest fares from {a} to {b}",
    "what does a ticket from {a} to {b} cost",
    "what is the price of a first class ticket from {a} to {b} in {month}",
    "i need the airfare from {a} to {b} for {name}",
    "how much does it cost to fly from {a} to {b} on {day}",
    "list the fares for flights from {a} to {b} leaving at {time}",
    "what is the cheapest one way fare from {a} to {b}",
    "how expensive is a round trip from {a} to {b}",
    "tell {name} the lowest price from {a} to {b}",
]
NON_TARGET = [
    "show me flights from {a} to {b} on {day}",
    "what flights leave {a} in the morning",
    "list the airlines flying from {a} to {b}",
    "book a flight for {name} from {a} to {b}",
    "what time does the flight from {a} arrive in {b}",
    "which ground transportation is available in {a}",
    "show me the nonstop flights from {a} to {b} on {month} {n}",
    "i want to fly from {a} to {b} on {day} at {time}",
    "what airports are in {a}",
    "does {name} have a seat on the flight from {a} to {b}",
    "give me the schedule of flights from {a} to {b} after {time}",
    "which airline serves dinner from {a} to {b}",
    "is there a flight from {a} to {b} that stops in {c}",
    "what kind of aircraft flies from {a} to {b}",
]


def fill(t, rng):
    a, b, c = rng.sample(CITIES, 3)
    return t.format(
        a=a, b=b, c=c, day=rng.choice(DAYS), month=rng.choice(MONTHS), name=rng.choice(NAMES),
        time=rng.choice(TIMES), n=rng.randint(1, 28),
    )


def main():
    rng = random.Random(20240517)
    rows = []
    for i in range(800):
        target = rng.random() < 0.3
        t = rng.choice(TARGET if target else NON_TARGET)
        rows.append((f"q{i:04d}", "target" if target else "non_target", fill(t, rng)))
    with open("flights.tsv", "w") as f:
        for r in rows:
            f.write("\t".join(r) + "\n")
    with open("names.txt", "w") as f:
        f.write("\n".join(NAMES) + "\n")
    with open("locations.txt", "w") as f:
        f.write("\n".join(CITIES) + "\n")


if __name__ == "__main__":
    main()
