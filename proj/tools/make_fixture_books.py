#!/usr/bin/env python3
"""Generate the bundled fixture books (CC0).

Each book is a sequence of episodes. An episode has a theme that decides the
vocabulary of its sentences, and themes follow a fixed transition table, so
the frames of one block say something about the frames of the next. Output is
deterministic for a given seed.

usage: make_fixture_books.py [--out data/books] [--sentences 3000] [--seed 7]
"""

import argparse
import os
import random

THEMES = {
    "journey": dict(
        nouns=["road", "path", "bridge", "horse", "cart", "hill", "valley", "journey", "map", "inn"],
        verbs=["walk", "travel", "climb", "ride", "wander", "cross", "follow", "march"],
        adjs=["long", "dusty", "narrow", "steep", "winding", "quiet"],
        next=["stranger", "storm", "secret"],
    ),
    "stranger": dict(
        nouns=["stranger", "visitor", "traveler", "guest", "cloak", "hat", "news", "letter", "rumor"],
        verbs=["greet", "welcome", "question", "watch", "visit", "ask", "whisper", "notice"],
        adjs=["tall", "silent", "strange", "weary", "young", "old"],
        next=["secret", "theft", "feast"],
    ),
    "storm": dict(
        nouns=["storm", "rain", "wind", "thunder", "cloud", "river", "roof", "lamp", "candle", "shelter"],
        verbs=["shelter", "wait", "shiver", "gather", "listen", "tremble", "light", "repair"],
        adjs=["cold", "dark", "wild", "heavy", "bitter", "grey"],
        next=["illness", "rescue", "journey"],
    ),
    "secret": dict(
        nouns=["secret", "key", "chest", "diary", "clue", "door", "cellar", "riddle", "mystery", "note"],
        verbs=["hide", "search", "discover", "open", "unlock", "conceal", "examine", "study"],
        adjs=["hidden", "locked", "ancient", "dusty", "secret", "small"],
        next=["theft", "treasure", "betrayal"],
    ),
    "theft": dict(
        nouns=["thief", "gold", "coin", "jewel", "purse", "window", "guard", "lock", "ring"],
        verbs=["steal", "rob", "vanish", "chase", "suspect", "accuse", "hunt", "track"],
        adjs=["stolen", "missing", "clever", "quick", "guilty", "nervous"],
        next=["trial", "chase", "betrayal"],
    ),
    "chase": dict(
        nouns=["forest", "wolf", "hunter", "arrow", "track", "shadow", "fox", "dog", "path"],
        verbs=["chase", "flee", "escape", "hunt", "track", "hurry", "rush", "hide"],
        adjs=["swift", "frightened", "breathless", "deep", "dark", "narrow"],
        next=["battle", "rescue", "storm"],
    ),
    "battle": dict(
        nouns=["sword", "soldier", "army", "shield", "enemy", "battle", "captain", "spear", "wound"],
        verbs=["attack", "fight", "strike", "defend", "charge", "wound", "kill", "march"],
        adjs=["fierce", "bloody", "brave", "wounded", "furious", "grim"],
        next=["grief", "illness", "feast"],
    ),
    "grief": dict(
        nouns=["grave", "funeral", "tear", "sorrow", "widow", "church", "prayer", "bell", "flower"],
        verbs=["mourn", "weep", "pray", "bury", "remember", "sigh", "kneel", "cry"],
        adjs=["sad", "silent", "pale", "lonely", "grieving", "solemn"],
        next=["journey", "inheritance", "farm"],
    ),
    "feast": dict(
        nouns=["feast", "music", "song", "wine", "bread", "fiddle", "dance", "table", "cheese", "supper"],
        verbs=["dance", "sing", "laugh", "celebrate", "drink", "eat", "play", "toast"],
        adjs=["merry", "happy", "loud", "warm", "bright", "cheerful"],
        next=["love", "stranger", "theft"],
    ),
    "love": dict(
        nouns=["heart", "kiss", "letter", "rose", "garden", "promise", "wedding", "ring", "bride"],
        verbs=["love", "marry", "promise", "embrace", "kiss", "smile", "blush", "adore"],
        adjs=["beloved", "lovely", "tender", "shy", "beautiful", "gentle"],
        next=["betrayal", "feast", "journey"],
    ),
    "betrayal": dict(
        nouns=["lie", "trick", "liar", "oath", "rival", "letter", "plot", "debt", "enemy"],
        verbs=["betray", "deceive", "cheat", "lie", "accuse", "scold", "threaten", "deny"],
        adjs=["false", "bitter", "angry", "jealous", "furious", "cruel"],
        next=["trial", "battle", "grief"],
    ),
    "trial": dict(
        nouns=["judge", "court", "trial", "law", "verdict", "prison", "witness", "sheriff", "cell"],
        verbs=["judge", "arrest", "punish", "testify", "defend", "sentence", "question", "accuse"],
        adjs=["guilty", "innocent", "stern", "solemn", "crowded", "fair"],
        next=["rescue", "grief", "journey"],
    ),
    "rescue": dict(
        nouns=["rope", "ladder", "boat", "friend", "companion", "help", "river", "tower", "gate"],
        verbs=["rescue", "save", "free", "help", "protect", "carry", "lift", "pull"],
        adjs=["brave", "grateful", "safe", "tired", "loyal", "strong"],
        next=["feast", "love", "journey"],
    ),
    "illness": dict(
        nouns=["fever", "doctor", "medicine", "bed", "cough", "illness", "nurse", "plague", "soup"],
        verbs=["heal", "cure", "nurse", "rest", "sleep", "sweat", "recover", "tend"],
        adjs=["sick", "weak", "pale", "feverish", "tired", "patient"],
        next=["grief", "rescue", "farm"],
    ),
    "treasure": dict(
        nouns=["treasure", "crown", "pearl", "gold", "map", "cave", "chest", "silver", "jewel"],
        verbs=["discover", "dig", "count", "share", "guard", "carry", "polish", "hide"],
        adjs=["shining", "heavy", "precious", "golden", "buried", "rich"],
        next=["theft", "betrayal", "feast"],
    ),
    "inheritance": dict(
        nouns=["will", "heir", "estate", "lawyer", "fortune", "house", "land", "debt", "uncle"],
        verbs=["inherit", "sign", "read", "claim", "sell", "argue", "settle", "divide"],
        adjs=["wealthy", "distant", "careful", "old", "proud", "poor"],
        next=["betrayal", "trial", "farm"],
    ),
    "farm": dict(
        nouns=["field", "farm", "harvest", "wheat", "barley", "cow", "sheep", "barn", "mill", "farmer"],
        verbs=["plough", "harvest", "work", "plant", "gather", "milk", "mend", "labor"],
        adjs=["golden", "tired", "muddy", "green", "early", "busy"],
        next=["storm", "feast", "stranger"],
    ),
}

IRREGULAR = {
    "ride": "rode", "steal": "stole", "flee": "fled", "fight": "fought", "strike": "struck", "weep": "wept",
    "sing": "sang", "drink": "drank", "eat": "ate", "hide": "hid", "kneel": "knelt", "dig": "dug",
    "read": "read", "sell": "sold", "light": "lit", "lie": "lied", "sleep": "slept", "carry": "carried",
    "cry": "cried", "deny": "denied", "testify": "testified", "bury": "buried", "hurry": "hurried",
    "sweat": "sweated", "mend": "mended", "kill": "killed",
}

TIMES = ["at dawn", "that evening", "before noon", "after supper", "in the morning", "at midnight",
         "the next day", "late that night", "before winter", "by the fire"]
PLACES = ["by the river", "near the old mill", "in the village", "on the hill", "at the inn",
          "behind the barn", "in the great hall", "beside the chapel", "at the crossroads", "under the oak"]
CONNECT = ["and", "but", "while", "because", "so", "until"]
PRONOUN = ["he", "she", "they"]

BOOKS = [
    ("the_lantern_keeper", ["Tobias", "Marta", "Ewan", "Greta", "Old Hal"], "journey"),
    ("the_salt_road", ["Ines", "Corwin", "Bram", "Lotte", "Captain Wren"], "farm"),
    ("winter_at_hollow_mill", ["Agnes", "Pell", "Rowan", "Mr. Ashby", "Dora"], "stranger"),
]

ROMAN = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII", "XIII", "XIV", "XV",
         "XVI", "XVII", "XVIII", "XIX", "XX", "XXI", "XXII", "XXIII", "XXIV", "XXV"]


def past(verb):
    if verb in IRREGULAR:
        return IRREGULAR[verb]
    if verb.endswith("e"):
        return verb + "d"
    if verb.endswith("y") and verb[-2] not in "aeiou":
        return verb[:-1] + "ied"
    if verb in ("plan", "stop", "grip"):
        return verb + verb[-1] + "ed"
    return verb + "ed"


def article(word):
    return ("an " if word[0] in "aeiou" else "a ") + word


def sentence(rng, theme, names):
    t = THEMES[theme]
    n = lambda: rng.choice(t["nouns"])
    v = lambda: rng.choice(t["verbs"])
    a = lambda: rng.choice(t["adjs"])
    who = rng.choice(names)
    other = rng.choice([x for x in names if x != who])
    forms = [
        lambda: f"{who} {past(v())} the {a()} {n()} {rng.choice(PLACES)} {rng.choice(TIMES)}.",
        lambda: f"The {a()} {n()} was {rng.choice(PLACES)}, {rng.choice(CONNECT)} {other} {past(v())} it.",
        lambda: f"\"We must {v()} the {n()} {rng.choice(TIMES)},\" said {who} to {other}.",
        lambda: f"{who} and {other} {past(v())} the {n()} and spoke of the {a()} {n()}.",
        lambda: f"Nobody in the village had seen such {article(a())} {n()} before.",
        lambda: f"{rng.choice(TIMES).capitalize()}, {rng.choice(PRONOUN)} {past(v())} the {n()} with great care.",
        lambda: f"{other} asked whether the {n()} would be {a()} {rng.choice(TIMES)}.",
        lambda: f"The {n()} and the {n()} were {a()}, {rng.choice(CONNECT)} no one could {v()} them.",
        lambda: f"{who} {past(v())} {rng.choice(PLACES)} and thought about the {a()} {n()} for a long time.",
        lambda: f"Was the {n()} truly {a()}, or had {other} only imagined it?",
    ]
    while True:
        s = rng.choice(forms)()
        words = len(s.replace(",", " ").replace(".", " ").replace("?", " ").replace('"', " ").split())
        if 8 <= words <= 16:
            return s[0].upper() + s[1:]


def make_book(rng, names, start, n_sentences):
    lines = []
    theme = start
    chapter = 0
    until_chapter = 0
    written = 0
    paragraph = []
    while written < n_sentences:
        length = rng.randint(25, 55)
        for _ in range(length):
            if written >= n_sentences:
                break
            if until_chapter == 0:
                if paragraph:
                    lines.append(" ".join(paragraph))
                    paragraph = []
                lines.append("")
                lines.append(f"CHAPTER {ROMAN[chapter % len(ROMAN)]}.")
                lines.append("")
                chapter += 1
                until_chapter = rng.randint(90, 170)
            paragraph.append(sentence(rng, theme, names))
            written += 1
            until_chapter -= 1
            if len(paragraph) >= rng.randint(4, 8):
                lines.append(" ".join(paragraph))
                lines.append("")
                paragraph = []
        theme = rng.choice(THEMES[theme]["next"])
    if paragraph:
        lines.append(" ".join(paragraph))
    return "\n".join(lines).strip() + "\n"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "books"))
    ap.add_argument("--sentences", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for i, (book_id, names, start) in enumerate(BOOKS):
        rng = random.Random(args.seed * 1000 + i)
        text = make_book(rng, names, start, args.sentences)
        with open(os.path.join(args.out, book_id + ".txt"), "w", encoding="utf-8") as f:
            f.write(text)


if __name__ == "__main__":
    main()
