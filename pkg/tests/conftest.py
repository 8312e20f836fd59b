import pytest

from maple.runner import golden
from maple.sim import load_world


@pytest.fixture(scope="session")
def world_spec():
    return load_world(golden("world"))


def tiny_world(**overrides):
    """Two-screen app plus a screen with nothing on it."""
    doc = {
        "version": 1,
        "screen_size": [400, 800],
        "apps": [{
            "name": "Shop",
            "initial": "home",
            "screens": {
                "home": {"beacon": "Homepage of Shop", "elements": [
                    {"id": "search", "kind": "text", "content": "Search", "bounds": [10, 60, 390, 120]},
                    {"id": "cart", "kind": "icon", "content": "Cart", "bounds": [300, 200, 380, 260]},
                    {"id": "deal", "kind": "text", "content": "Deal {n}", "bounds": [10, 200, 200, 260]},
                ]},
                "search": {"beacon": "Search Page of Shop", "elements": [
                    {"id": "field", "kind": "text", "content": "Query: {q}", "bounds": [10, 60, 390, 120]},
                ]},
                "blank": {"beacon": "Blank Page of Shop", "elements": []},
            },
            "rules": [
                {"screen": "home", "on": {"action": "tap", "element": "search"}, "to": "search"},
                {"screen": "home", "on": {"action": "tap", "element": "cart"}, "to": "blank",
                 "set": {"n": "+1"}},
                {"screen": "search", "on": {"action": "type"}, "to": "search", "set": {"q": "$text"}},
            ],
        }],
        "variables": {"n": 0, "q": ""},
    }
    doc.update(overrides)
    return doc
