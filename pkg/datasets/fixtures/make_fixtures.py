"""Regenerate the scripted fixtures in this directory.

    python datasets/fixtures/make_fixtures.py

Writes the trivia dataset, its playbook, the single-task conflict fixture
(``conflict_case/``) and the scripted configs.  Output is deterministic.
"""

from __future__ import annotations

import json
from pathlib import Path

HERE = Path(__file__).resolve().parent


def claims_block(pairs: dict[str, str]) -> str:
    return "```claims\n" + "\n".join(f"{k}: {v}" for k, v in pairs.items()) + "\n```"


def dea_answer(domain: str, pairs: dict[str, str]) -> str:
    return f"From the {domain} perspective:\n" + claims_block(pairs)


# topic tag -> spec.  Each sub-task lists its question keys and the expert
# rules that answer it: (domain, grade, {key: answer}).
TRIVIA = [
    {
        "id": "hollywood",
        "topic": "Classic Hollywood",
        "questions": [
            ("For which film did Katharine Hepburn win her second Academy Award for Best Actress?", ["Guess Who's Coming to Dinner"]),
            ("Who directed Psycho (1960)?", ["Alfred Hitchcock", "Hitchcock"]),
            ("Who played Rick Blaine in Casablanca?", ["Humphrey Bogart", "Bogart"]),
            ("Which studio is known for its roaring lion logo?", ["Metro-Goldwyn-Mayer", "MGM"]),
            ("In which year was Gone with the Wind released?", ["1939"]),
        ],
        "subtasks": [
            ("T1", [1, 2, 3], [
                ("Entertainment-and-Media", "High", {"q1": "Guess Who's Coming to Dinner (1967)", "q2": "Alfred Hitchcock", "q3": "Humphrey Bogart"}),
                ("Arts-and-Design", "Medium", {"q1": "The Lion in Winter (1968)", "q2": "Alfred Hitchcock", "q3": "Humphrey Bogart"}),
                ("History", "Medium", {"q1": "Guess Who's Coming to Dinner", "q2": "Alfred Hitchcock", "q3": "Humphrey Bogart"}),
            ]),
            ("T2", [4, 5], [
                ("Economics", "Sub-High", {"q4": "Metro-Goldwyn-Mayer", "q5": "1939"}),
                ("History", "Mid-Low", {"q4": "Paramount Pictures", "q5": "1939"}),
            ]),
        ],
    },
    {
        "id": "space",
        "topic": "Space Exploration",
        "questions": [
            ("Who was the first person to walk on the Moon?", ["Neil Armstrong", "Armstrong"]),
            ("Which planet is known as the Red Planet?", ["Mars"]),
            ("Which country launched Sputnik 1?", ["Soviet Union", "USSR"]),
            ("Which space telescope was launched in 1990?", ["Hubble Space Telescope", "Hubble"]),
            ("What is the largest planet in the Solar System?", ["Jupiter"]),
        ],
        "subtasks": [
            ("T1", [1, 2, 3, 4, 5], [
                ("Science", "High", {"q1": "Neil Armstrong", "q2": "Mars", "q4": "Hubble", "q5": "Jupiter"}),
                ("Technology", "Sub-High", {"q3": "United States", "q4": "Hubble"}),
                ("History", "Medium", {"q1": "Neil Armstrong", "q3": "United States"}),
            ]),
        ],
    },
    {
        "id": "capitals",
        "topic": "World Capitals",
        "questions": [
            ("What is the capital of Australia?", ["Canberra"]),
            ("What is the capital of Canada?", ["Ottawa"]),
            ("What is the capital of Japan?", ["Tokyo"]),
            ("What is the capital of Kenya?", ["Nairobi"]),
            ("What is the capital of Peru?", ["Lima"]),
        ],
        "subtasks": [
            ("T1", [1, 2, 3, 4, 5], [
                ("Geography", "High", {"q1": "Canberra", "q2": "Ottawa", "q3": "Tokyo", "q4": "Nairobi", "q5": "Lima"}),
                ("Politics", "Medium", {"q1": "Sydney", "q2": "Ottawa"}),
                ("Economics", "Lower", {"q1": "Sydney"}),
            ]),
        ],
    },
    {
        "id": "authors",
        "topic": "Famous Authors",
        "questions": [
            ("Who wrote Pride and Prejudice?", ["Jane Austen", "Austen"]),
            ("Who wrote Nineteen Eighty-Four?", ["George Orwell", "Eric Arthur Blair"]),
            ("Who wrote The Adventures of Tom Sawyer?", ["Mark Twain", "Samuel Clemens"]),
            ("Who wrote Don Quixote?", ["Miguel de Cervantes", "Cervantes"]),
            ("Who is traditionally credited with The Odyssey?", ["Homer"]),
        ],
        "subtasks": [
            ("T1", [1, 2, 3], [
                ("Literature", "High", {"q1": "Jane Austen", "q2": "George Orwell", "q3": "Samuel Clemens"}),
                ("History", "Lower", {"q3": "Mark Twain"}),
            ]),
            ("T2", [4, 5], [
                ("Literature", "Sub-High", {"q4": "Miguel de Cervantes"}),
                ("Philosophy", "Medium", {"q5": "Plato"}),
            ]),
        ],
    },
    {
        "id": "music",
        "topic": "Music Legends",
        "questions": [
            ("Who is known as the King of Pop?", ["Michael Jackson"]),
            ("Who composed the Symphony No. 5 in C minor, Op. 67?", ["Ludwig van Beethoven", "Beethoven"]),
            ("Which band released the album Abbey Road?", ["The Beatles", "Beatles"]),
            ("Which instrument is Yo-Yo Ma famous for playing?", ["cello", "violoncello"]),
            ("Who was the lead singer of Queen?", ["Freddie Mercury"]),
        ],
        "subtasks": [
            ("T1", [1, 2, 3, 4, 5], [
                ("Music", "High", {"q1": "Michael Jackson", "q2": "Beethoven", "q3": "The Beatles", "q4": "cello"}),
                ("Pop-Culture", "Sub-High", {"q1": "Michael Jackson", "q5": "Freddie Mercury"}),
                ("Arts-and-Design", "Mid-Low", {"q4": "violin"}),
            ]),
        ],
    },
]

GRADE = {"High": 10, "Sub-High": 8, "Medium": 6, "Mid-Low": 4, "Lower": 2, "Low": 0}


def winners(rules) -> dict[str, str]:
    """Hand-resolved winning surface text per key (mirrors the fixture design)."""
    support: dict[str, dict[str, list]] = {}
    for domain, grade, pairs in rules:
        for k, v in pairs.items():
            norm = v.lower().split(" (")[0].removeprefix("the ")
            support.setdefault(k, {}).setdefault(norm, [0, v])[0] += GRADE[grade]
    out = {}
    for k, opts in support.items():
        best = sorted(opts.items(), key=lambda kv: (-kv[1][0], kv[0]))[0]
        out[k] = best[1][1]
    return out


def build_trivia() -> None:
    dataset = []
    entries = []
    for inst in TRIVIA:
        tag = inst["id"]
        dataset.append(
            {
                "id": tag,
                "topic": inst["topic"],
                "questions": [{"question": q, "answers": a} for q, a in inst["questions"]],
            }
        )
        plan_lines = []
        finals = []
        for sid, qnums, rules in inst["subtasks"]:
            qtext = " ".join(f"(q{n}) {inst['questions'][n - 1][0]}" for n in qnums)
            instruction = f"[{tag}/{sid}] Answer these trivia questions: {qtext}"
            plan_lines.append(f"{sid}: {instruction}")
            rules_block = "```rules\n" + "\n".join(f"{d}: {g}" for d, g, _ in rules) + "\n```"
            entries.append({"role": "DAA", "match": f"[{tag}/{sid}]", "response": "Domain analysis complete.\n" + rules_block})
            for domain, _, pairs in rules:
                entries.append(
                    {
                        "role": "DEA",
                        "match": f"Domain: {domain}\nSub-task:\n[{tag}/{sid}]",
                        "response": dea_answer(domain, pairs),
                    }
                )
            won = winners(rules)
            fused = "; ".join(f"{k}: {won[k]}" for k in sorted(won))
            entries.append(
                {"role": "FEA", "match": f"Fuse the expert claims for sub-task {sid}.\n\nSub-task:\n[{tag}/{sid}]", "response": fused}
            )
            finals.extend(won[k] for k in sorted(won))
        plan_lines.append(f"FUSE: Write a short story about {inst['topic']} weaving in every answer.")
        entries.append(
            {
                "role": "PA",
                "match": f"Task:\nWrite a short and coherent story about {inst['topic']} ",
                "response": "```plan\n" + "\n".join(plan_lines) + "\n```",
            }
        )
        story = f"A tale of {inst['topic']}: " + ", ".join(finals) + "."
        entries.append(
            {"role": "FEA", "match": f"Write a short story about {inst['topic']} weaving", "response": story}
        )
    (HERE / "trivia5.json").write_text(json.dumps(dataset, indent=2) + "\n", encoding="utf-8")
    (HERE / "trivia5.playbook.jsonl").write_text(
        "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in entries), encoding="utf-8"
    )
    (HERE / "trivia5.yaml").write_text(
        "backend:\n  kind: scripted\n  playbook: trivia5.playbook.jsonl\n"
        "engine:\n  max_rules: 5\n  execution_threshold: Lower\n  tau: 0.5\n",
        encoding="utf-8",
    )


CONFLICT_QUESTION = "For which film did Katharine Hepburn win her second Academy Award for Best Actress?"


def build_conflict_case() -> None:
    out = HERE / "conflict_case"
    out.mkdir(exist_ok=True)
    task = {
        "id": "conflict_case",
        "text": f"Answer the movie trivia question and name the film: {CONFLICT_QUESTION}",
        "metadata": {"kind": "trivia", "question_keys": "movie"},
    }
    entries = [
        {
            "role": "PA",
            "match": "Answer the movie trivia question",
            "response": "```plan\nT1: Identify the film asked about: " + CONFLICT_QUESTION
            + "\nFUSE: State the film as the final answer.\n```",
        },
        {
            "role": "DAA",
            "match": "Analyze the domains",
            "response": "The question is about a film award.\n```rules\n"
            "Entertainment-and-Media: High\nArts-and-Design: Medium\nHistory: Medium\n```",
        },
        {
            "role": "DEA",
            "match": "Domain: Entertainment-and-Media\n",
            "response": "Hepburn's second Best Actress Oscar came for the 1967 comedy-drama.\n"
            + claims_block({"movie": "Guess Who's Coming to Dinner (1967)"}),
        },
        {
            "role": "DEA",
            "match": "Domain: Arts-and-Design\n",
            "response": "Her celebrated turn as Eleanor of Aquitaine won the award.\n"
            + claims_block({"movie": "The Lion in Winter (1968)"}),
        },
        {
            "role": "DEA",
            "match": "Domain: History\n",
            "response": "Records of the 40th Academy Awards list her win for this film.\n"
            + claims_block({"movie": "Guess Who's Coming to Dinner"}),
        },
        {
            "role": "FEA",
            "match": "(?s)Fuse the expert claims.*Guess Who's Coming to Dinner",
            "regex": True,
            "response": "Katharine Hepburn won her second Best Actress Oscar for Guess Who's Coming to Dinner (1967).",
        },
        {
            "role": "FEA",
            "match": "State the film as the final answer.",
            "response": "Final answer: Guess Who's Coming to Dinner (1967).",
        },
    ]
    (out / "task.json").write_text(json.dumps(task, indent=2) + "\n", encoding="utf-8")
    (out / "playbook.jsonl").write_text(
        "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in entries), encoding="utf-8"
    )
    (out / "config.yaml").write_text(
        "backend:\n  kind: scripted\n  playbook: playbook.jsonl\nengine:\n  tau: 0.5\n", encoding="utf-8"
    )


def build_small_sets() -> None:
    logic = [
        {
            "id": "logic-0",
            "input": "There are 3 houses, numbered 1 to 3 from left to right.\n"
            "Each house is occupied by a different person.\n"
            "Clues:\n1. The pianist lives directly left of the painter.\n"
            "2. The painter lives in house 3.\n"
            "Q: What is the number of the house where the pianist lives?",
            "target": "2",
        },
        {
            "id": "logic-1",
            "input": "There are 2 houses, numbered 1 to 2 from left to right.\n"
            "Clues:\n1. The baker does not live in house 2.\n"
            "Q: What is the number of the house where the baker lives?",
            "target": "1",
        },
    ]
    codenames = [
        {"id": "cn-0", "targets": ["apple", "banana", "cherry"], "distractors": ["car", "bridge", "cloud"]},
        {"id": "cn-1", "targets": ["ocean", "wave"], "distractors": ["desert", "sand", "fire"]},
    ]
    (HERE / "logic.json").write_text(json.dumps(logic, indent=2) + "\n", encoding="utf-8")
    (HERE / "codenames.json").write_text(json.dumps(codenames, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    build_trivia()
    build_conflict_case()
    build_small_sets()
