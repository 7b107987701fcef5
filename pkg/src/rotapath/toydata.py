"""Synthetic desk-scale benchmark: a family/affiliation world with templated
1-hop and 2-hop questions.

The world has people in multi-generation families, companies, cities, and
clubs, connected by 8 forward relations. 2-hop questions are generated from
exact relation compositions (grandparents, employer cities, ...), so every
answer is derivable from the graph; friendship edges add spurious shortest
paths. Everything is deterministic under the seed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PARENT = "parent_of"
SPOUSE = "spouse_of"
FRIEND = "friend_of"
WORKS = "works_at"
LEADS = "leads"
LOCATED = "located_in"
LIVES = "lives_in"
SUPPORTS = "supports_club"

_FIRST = [
    "alice", "bruno", "carla", "derek", "elena", "felix", "gina", "hugo",
    "iris", "jonas", "karin", "lars", "mona", "nils", "olga", "pavel",
    "quinn", "rosa", "sven", "tara", "ulf", "vera", "wim", "xena",
    "yuri", "zoe", "arne", "bella", "cyrus", "dora",
]
_SURNAME = [
    "morgan", "fischer", "ozawa", "lindqvist", "ferraro", "novak", "smit",
    "kovacs", "duarte", "holm", "ivanov", "castillo", "berg", "okafor",
    "larsen", "quispe", "moreau", "tanaka", "weiss", "zhang", "haas",
    "mbeki", "rossi", "nilsen", "varga",
]
_ORG_A = ["acme", "nordic", "zenith", "delta", "orion", "vertex", "lumen",
          "cobalt", "aurora", "pioneer", "summit", "harbor"]
_ORG_B = ["robotics", "logistics", "biotech", "analytics", "foundry",
          "systems", "media", "labs", "energy", "textiles"]
_CITY = ["riverton", "eastgate", "marlow", "kestrel_bay", "virelle",
         "dunmore", "ashford", "pinehollow", "graystone", "veldt",
         "silverfen", "oakmere", "bramwick", "thornby", "lunden"]
_CLUB = ["falcons", "mariners", "wolves", "comets", "harriers",
         "rovers", "titans", "larks"]


@dataclass
class ToyWorld:
    triples: list[tuple[str, str, str]]
    questions: dict[str, list[tuple[str, str, int]]]  # split -> (text, answers, hop)


def _person_name(rng, surname, used):
    for _ in range(100):
        name = f"{_FIRST[rng.integers(len(_FIRST))]}_{surname}"
        if name not in used:
            used.add(name)
            return name
    name = f"{_FIRST[rng.integers(len(_FIRST))]}_{surname}_{len(used)}"
    used.add(name)
    return name


def build_world(seed: int = 0, n_families: int = 20, n_orgs: int = 20,
                n_cities: int = 12, n_clubs: int = 8,
                questions_per_template: int = 80,
                incomplete_fraction: float = 0.06) -> ToyWorld:
    """`incomplete_fraction` of the facts are withheld from the emitted graph
    (answers are still computed on the complete world), so part of the gold
    evidence is only recoverable through embedding generalization, mirroring
    reasoning over an incomplete KG."""
    rng = np.random.default_rng(seed)
    used_names: set[str] = set()
    triples: list[tuple[str, str, str]] = []
    people: list[str] = []
    adults: list[str] = []

    cities = list(_CITY[:n_cities])
    clubs = [f"{c}_club" for c in _CLUB[:n_clubs]]
    orgs = []
    pairs = list(itertools.product(_ORG_A, _ORG_B))
    for i in range(n_orgs):
        a, b = pairs[int(rng.integers(len(pairs)))]
        name = f"{a}_{b}"
        while name in orgs:
            name = f"{a}_{b}_{len(orgs)}"
        orgs.append(name)

    def add(h, r, t):
        triples.append((h, r, t))

    for fam in range(n_families):
        surname = _SURNAME[fam % len(_SURNAME)]
        home = cities[int(rng.integers(len(cities)))]

        def new_person(adult=True):
            p = _person_name(rng, surname, used_names)
            people.append(p)
            if adult:
                adults.append(p)
            city = home if rng.random() < 0.6 else cities[int(rng.integers(len(cities)))]
            add(p, LIVES, city)
            return p

        grandpa = new_person()
        grandma = new_person()
        add(grandpa, SPOUSE, grandma)
        children = [new_person() for _ in range(int(rng.integers(2, 4)))]
        for ch in children:
            add(grandpa, PARENT, ch)
            add(grandma, PARENT, ch)
        for ch in children:
            partner = None
            if rng.random() < 0.7:
                other_surname = _SURNAME[int(rng.integers(len(_SURNAME)))]
                partner = _person_name(rng, other_surname, used_names)
                people.append(partner)
                adults.append(partner)
                city = home if rng.random() < 0.5 else cities[int(rng.integers(len(cities)))]
                add(partner, LIVES, city)
                add(ch, SPOUSE, partner)
            for _ in range(int(rng.integers(0, 4))):
                kid = new_person(adult=False)
                add(ch, PARENT, kid)
                if partner is not None:
                    add(partner, PARENT, kid)

    for org in orgs:
        add(org, LOCATED, cities[int(rng.integers(len(cities)))])
    employer: dict[str, str] = {}
    for p in adults:
        if rng.random() < 0.85:
            org = orgs[int(rng.integers(len(orgs)))]
            employer[p] = org
            add(p, WORKS, org)
    for org in orgs:
        staff = [p for p, o in employer.items() if o == org]
        if staff:
            add(staff[int(rng.integers(len(staff)))], LEADS, org)

    for p in people:
        if rng.random() < 0.5:
            add(p, SUPPORTS, clubs[int(rng.integers(len(clubs)))])
    for p in people:
        for _ in range(int(rng.integers(1, 3))):
            q = people[int(rng.integers(len(people)))]
            if q != p:
                add(p, FRIEND, q)

    triples = sorted(set(triples))
    questions = _make_questions(rng, triples, questions_per_template)
    if incomplete_fraction > 0:
        keep = rng.random(len(triples)) >= incomplete_fraction
        triples = [t for t, k in zip(triples, keep) if k]
    return ToyWorld(triples, questions)


def _index(triples):
    fwd: dict[str, dict[str, set[str]]] = {}
    bwd: dict[str, dict[str, set[str]]] = {}
    for h, r, t in triples:
        fwd.setdefault(r, {}).setdefault(h, set()).add(t)
        bwd.setdefault(r, {}).setdefault(t, set()).add(h)
    return fwd, bwd


def _make_questions(rng, triples, per_template):
    fwd, bwd = _index(triples)

    def fw(rel, x):
        return fwd.get(rel, {}).get(x, set())

    def bw(rel, x):
        return bwd.get(rel, {}).get(x, set())

    def spouse(x):
        return fw(SPOUSE, x) | bw(SPOUSE, x)

    def hop2(first, second, x):
        out = set()
        for mid in first(x):
            out |= second(mid)
        return out

    templates = [
        # (hop, phrasings, topic pool fn, answer fn)
        (1, ["who is a parent of [{e}]", "name a parent of [{e}]"],
         lambda: bwd.get(PARENT, {}), lambda x: bw(PARENT, x)),
        (1, ["who are the children of [{e}]", "list the children of [{e}]"],
         lambda: fwd.get(PARENT, {}), lambda x: fw(PARENT, x)),
        (1, ["who is married to [{e}]", "who is the spouse of [{e}]"],
         lambda: {p: None for p in set(fwd.get(SPOUSE, {})) | set(bwd.get(SPOUSE, {}))},
         spouse),
        (1, ["in which city does [{e}] live", "where does [{e}] live"],
         lambda: fwd.get(LIVES, {}), lambda x: fw(LIVES, x)),
        (1, ["where is [{e}] located", "in which city is [{e}] based"],
         lambda: fwd.get(LOCATED, {}), lambda x: fw(LOCATED, x)),
        (1, ["who works at [{e}]", "name an employee of [{e}]"],
         lambda: bwd.get(WORKS, {}), lambda x: bw(WORKS, x)),
        (1, ["who leads [{e}]", "who is the leader of [{e}]"],
         lambda: bwd.get(LEADS, {}), lambda x: bw(LEADS, x)),
        (1, ["which company does [{e}] work for", "which company employs [{e}]"],
         lambda: fwd.get(WORKS, {}), lambda x: fw(WORKS, x)),
        (1, ["which club does [{e}] support", "which club is [{e}] a fan of"],
         lambda: fwd.get(SUPPORTS, {}), lambda x: fw(SUPPORTS, x)),
        (2, ["who is a grandparent of [{e}]", "name a grandparent of [{e}]"],
         lambda: bwd.get(PARENT, {}),
         lambda x: hop2(lambda y: bw(PARENT, y), lambda y: bw(PARENT, y), x)),
        (2, ["who are the grandchildren of [{e}]", "list the grandchildren of [{e}]"],
         lambda: fwd.get(PARENT, {}),
         lambda x: hop2(lambda y: fw(PARENT, y), lambda y: fw(PARENT, y), x)),
        (2, ["in which city is the employer of [{e}] located",
             "where is the company that employs [{e}] based"],
         lambda: fwd.get(WORKS, {}),
         lambda x: hop2(lambda y: fw(WORKS, y), lambda y: fw(LOCATED, y), x)),
        (2, ["in which city does the spouse of [{e}] live",
             "where does the spouse of [{e}] live"],
         lambda: {p: None for p in set(fwd.get(SPOUSE, {})) | set(bwd.get(SPOUSE, {}))},
         lambda x: hop2(spouse, lambda y: fw(LIVES, y), x)),
        (2, ["who works at the company led by [{e}]",
             "name an employee of the company that [{e}] leads"],
         lambda: fwd.get(LEADS, {}),
         lambda x: hop2(lambda y: fw(LEADS, y), lambda y: bw(WORKS, y), x)),
        (2, ["which club does the spouse of [{e}] support",
             "which club is the spouse of [{e}] a fan of"],
         lambda: {p: None for p in set(fwd.get(SPOUSE, {})) | set(bwd.get(SPOUSE, {}))},
         lambda x: hop2(spouse, lambda y: fw(SUPPORTS, y), x)),
        (2, ["who is married to a child of [{e}]",
             "who is the spouse of a child of [{e}]"],
         lambda: fwd.get(PARENT, {}),
         lambda x: hop2(lambda y: fw(PARENT, y), spouse, x)),
        (2, ["who leads the company where [{e}] works",
             "who is the leader of the employer of [{e}]"],
         lambda: fwd.get(WORKS, {}),
         lambda x: hop2(lambda y: fw(WORKS, y), lambda y: bw(LEADS, y), x)),
        # deliberately confusable with the grandparent/children templates:
        # the relation-path text shares most tokens, so the question view has
        # to carry part of the discrimination
        (2, ["who is a parent-in-law of [{e}]",
             "name a parent-in-law of [{e}]"],
         lambda: {p: None for p in set(fwd.get(SPOUSE, {})) | set(bwd.get(SPOUSE, {}))},
         lambda x: hop2(spouse, lambda y: bw(PARENT, y), x)),
        (2, ["who is a child of the spouse of [{e}]",
             "name a child of the spouse of [{e}]"],
         lambda: {p: None for p in set(fwd.get(SPOUSE, {})) | set(bwd.get(SPOUSE, {}))},
         lambda x: hop2(spouse, lambda y: fw(PARENT, y), x)),
    ]

    # 1-hop templates get a higher cap: several of them have small topic
    # pools (organizations), and the evaluation should not be dominated by
    # 2-hop questions
    caps = {1: int(1.4 * per_template), 2: int(0.7 * per_template)}
    all_questions: list[tuple[str, str, int]] = []
    for hop, phrasings, pool_fn, answer_fn in templates:
        topics = sorted(pool_fn())
        rng.shuffle(topics)
        count = 0
        for topic in topics:
            if count >= caps[hop]:
                break
            answers = answer_fn(topic)
            if not answers:
                continue
            text = phrasings[int(rng.integers(len(phrasings)))].format(e=topic)
            all_questions.append((text, "|".join(sorted(answers)), hop))
            count += 1

    order = rng.permutation(len(all_questions))
    all_questions = [all_questions[i] for i in order]
    n = len(all_questions)
    n_train = int(0.8 * n)
    n_dev = int(0.1 * n)
    return {
        "train": all_questions[:n_train],
        "dev": all_questions[n_train : n_train + n_dev],
        "test": all_questions[n_train + n_dev :],
    }


def write_world(world: ToyWorld, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "kb.txt", "w", encoding="utf-8") as f:
        for h, r, t in world.triples:
            f.write(f"{h}\t{r}\t{t}\n")
    for split, rows in world.questions.items():
        with open(out / f"qa_{split}.txt", "w", encoding="utf-8") as f:
            for text, answers, hop in rows:
                f.write(f"{text}\t{answers}\t{hop}\n")
    return out
