import os

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")

BUNDLED_CASES = {
    "ieee34": os.path.join(DATA_DIR, "ieee34.json"),
    "ieee85": os.path.join(DATA_DIR, "ieee85.json"),
}

BUNDLED_PROFILES = {
    "ieee34": os.path.join(DATA_DIR, "ieee34_profiles.csv"),
    "ieee85": os.path.join(DATA_DIR, "ieee85_profiles.csv"),
}

# reconfiguration instants 07:00, 12:00 and 21:00
WINDOW_PRESETS = {
    "scenario1": "07:00-12:00",
    "scenario2": "12:00-21:00",
    "day": "00:00-24:00",
    "noon": "11:00-12:00",
}

SCHEMA_VERSION = 1
