#!/usr/bin/env python3
"""Writes the 12-case mock benchmark: cases.jsonl, corpus.jsonl, nli.json, mock.json.

Each case has one decisive finding at segment `key` (1-based). The scripted
model answers with the gold diagnosis only once that finding is in the prompt,
and the evidence ledger scores above 50 only then. Re-run after editing the
case table; then regenerate golden/ with `medconf bench`.
"""
import hashlib
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
PROMPTS = os.path.join(HERE, "..", "..", "assets", "prompts")

CASES = [
    dict(id="c01", kind="dialogue", gold="Acute appendicitis", aliases=["appendicitis"], wrong="Gastroenteritis", key=1, units=[
        ("What brings you in today?", "The pain moved from my belly button to the lower right side of my abdomen overnight."),
        ("Have you been sick to your stomach?", "I threw up twice this morning and cannot keep breakfast down."),
        ("Any fever?", "My thermometer read thirty eight degrees last night."),
        ("Does it hurt when you walk?", "Walking to the car made the right sided ache much worse."),
        ("When did you last eat normally?", "I skipped dinner yesterday because I had no appetite at all."),
        ("Any diarrhea?", "My bowel movements have been normal this week."),
        ("Any recent travel?", "I have not left the city in the last two months."),
        ("Any past surgery?", "I only had my tonsils removed as a child."),
        ("Do you take any medicines?", "Just a daily multivitamin, nothing else."),
        ("Anyone sick at home?", "My roommate has been perfectly healthy lately."),
    ]),
    dict(id="c02", kind="report", gold="Community-acquired pneumonia", aliases=["pneumonia"], wrong="Acute bronchitis", key=2, units=[
        "A 67-year-old man presents with five days of productive cough and fatigue.",
        "Chest radiograph shows a right lower lobe consolidation with air bronchograms.",
        "He reports rigors and a temperature of 39.1 degrees at home.",
        "Oxygen saturation is 91 percent on room air.",
        "Crackles are heard over the right base on auscultation.",
        "He lives independently and has not been hospitalized this year.",
        "White cell count is 15,800 per microliter with neutrophilia.",
        "He is a former smoker with a 30 pack-year history.",
        "Blood pressure is 124 over 76 and he is alert.",
        "He received the influenza vaccine last autumn.",
    ]),
    dict(id="c03", kind="dialogue", gold="Migraine", aliases=["migraine without aura", "migraine with aura"], wrong="Tension headache", key=2, units=[
        ("How can I help you?", "I keep getting bad headaches a few times a month."),
        ("Where is the pain and what is it like?", "It throbs on one side and I have to lie in a dark room because light hurts my eyes."),
        ("How long does each headache last?", "Usually most of a day, sometimes into the next morning."),
        ("Anything before the pain starts?", "Sometimes I see zigzag lines for twenty minutes beforehand."),
        ("Does anyone in your family get headaches?", "My mother has had similar headaches for years."),
        ("Any nausea?", "I often feel queasy during the worst part."),
        ("What have you tried?", "Ibuprofen helps a little if I take it early."),
        ("Any weakness or numbness?", "No, my arms and legs feel completely normal."),
    ]),
    dict(id="c04", kind="report", gold="Type 2 diabetes mellitus", aliases=["type 2 diabetes", "diabetes mellitus"], wrong="Hyperthyroidism", key=4, units=[
        "A 52-year-old woman reports feeling tired for several months.",
        "She has noticed blurred vision while reading in the evenings.",
        "Her body mass index is 33 and she works a desk job.",
        "Fasting plasma glucose measured twice was 151 and 163 milligrams per deciliter.",
        "She gets up three times a night to pass urine.",
        "Her father developed kidney disease in his sixties.",
        "She reports a slow healing cut on her left foot.",
        "Her blood pressure is 138 over 88.",
        "She does not smoke and drinks alcohol rarely.",
        "Thyroid stimulating hormone was normal last year.",
    ]),
    dict(id="c05", kind="dialogue", gold="Urinary tract infection", aliases=["UTI", "cystitis"], wrong="Kidney stones", key=4, units=[
        ("What is bothering you?", "I have had an ache low in my tummy since Tuesday."),
        ("Is the pain constant?", "It is a dull pressure that comes and goes."),
        ("Any fever or chills?", "I felt a bit warm yesterday afternoon."),
        ("Any burning when you pass urine?", "Yes, it stings every time I pee and I need to go every half hour."),
        ("Have you seen blood in the urine?", "The urine looked cloudy and smelled strong this morning."),
        ("Any back pain?", "My back feels fine."),
        ("Are you sexually active?", "Yes, with one regular partner."),
        ("Have you had this before?", "Once, about three years ago."),
        ("Are you pregnant?", "No, my last period ended a week ago."),
        ("Any allergies?", "I am allergic to penicillin."),
    ]),
    dict(id="c06", kind="report", gold="Deep vein thrombosis", aliases=["DVT"], wrong="Cellulitis", key=6, units=[
        "A 45-year-old woman presents with swelling of the left calf for two days.",
        "The left leg feels warm and tender to touch.",
        "She is otherwise well with no fever.",
        "She takes a combined oral contraceptive pill.",
        "There is no break in the skin and no insect bite.",
        "She returned from a fourteen hour flight from Singapore last week.",
        "The left calf circumference is 3 centimeters larger than the right.",
        "Her heart rate is 88 and oxygen saturation is 98 percent.",
        "She has no history of clotting problems in her family.",
        "Compression ultrasound of the left popliteal vein is pending.",
    ]),
    dict(id="c07", kind="dialogue", gold="Gastroesophageal reflux disease", aliases=["GERD", "acid reflux"], wrong="Angina", key=6, units=[
        ("What seems to be the problem?", "I get a burning feeling in the middle of my chest."),
        ("When does it happen?", "Mostly in the evening, a few times a week."),
        ("Does it spread anywhere?", "It stays behind the breastbone."),
        ("Does exercise bring it on?", "I notice it more when I bend over to tie my shoes."),
        ("Any shortness of breath?", "No trouble breathing at all."),
        ("Does anything make it better?", "It gets worse when I lie down after a big dinner and antacids settle it within minutes."),
        ("Any sour taste?", "Sometimes there is a bitter taste at the back of my throat."),
        ("Any weight loss or trouble swallowing?", "My weight is steady and food goes down fine."),
        ("Do you smoke or drink?", "I have two glasses of wine most nights."),
        ("Any heart problems in the family?", "My uncle had a heart attack at seventy."),
    ]),
    dict(id="c08", kind="report", gold="Hypothyroidism", aliases=["underactive thyroid"], wrong="Iron deficiency anemia", key=8, units=[
        "A 38-year-old woman complains of fatigue for six months.",
        "She has gained 6 kilograms without changing her diet.",
        "She feels cold when others in the office are comfortable.",
        "Her periods have become heavier.",
        "Her skin is dry and her hair has thinned.",
        "She reports constipation and low mood.",
        "Her pulse is 56 beats per minute.",
        "Thyroid stimulating hormone is 14.2 with a low free thyroxine.",
        "Hemoglobin is 12.6 grams per deciliter.",
        "She has no history of neck surgery or radiation.",
    ]),
    dict(id="c09", kind="dialogue", gold="Asthma", aliases=["bronchial asthma"], wrong="Allergic rhinitis", key=8, units=[
        ("What brings you here?", "My nose runs and I sneeze a lot in spring."),
        ("Any cough?", "I cough at night, especially after playing football."),
        ("Do your eyes itch?", "My eyes get itchy when the grass is cut."),
        ("Any pets at home?", "We have a cat that sleeps on my bed."),
        ("Has this affected school?", "I missed two days of school last month."),
        ("Any eczema as a child?", "I had dry itchy patches on my elbows when I was little."),
        ("Does anyone in the family have allergies?", "My sister gets hay fever."),
        ("Do you ever wheeze or feel tight in the chest?", "I wheeze and my chest feels tight when I run, and the school nurse measured a peak flow that improved a lot after an inhaler."),
        ("Do you smoke?", "No, and nobody smokes at home."),
    ]),
    dict(id="c10", kind="report", gold="Acute cholecystitis", aliases=["cholecystitis"], wrong="Peptic ulcer disease", key=10, units=[
        "A 50-year-old woman presents with upper abdominal pain for one day.",
        "The pain began an hour after a fried meal.",
        "She has vomited twice.",
        "Her temperature is 38.2 degrees.",
        "She has had similar shorter episodes over the past year.",
        "She takes ibuprofen occasionally for knee pain.",
        "Her bowel habit is unchanged.",
        "Liver function tests show a mildly raised alkaline phosphatase.",
        "The pain radiates to the right shoulder tip.",
        "Ultrasound shows gallstones with a thickened gallbladder wall and a positive sonographic Murphy sign.",
    ]),
    dict(id="c11", kind="dialogue", gold="Infectious mononucleosis", aliases=["mononucleosis", "glandular fever"], wrong="Streptococcal pharyngitis", key=10, units=[
        ("What is wrong today?", "My throat has been very sore for a week."),
        ("Any fever?", "I have been running a temperature on and off."),
        ("How is your energy?", "I am exhausted and sleep most of the afternoon."),
        ("Any swollen glands?", "There are tender lumps on both sides of my neck."),
        ("Can you swallow?", "Swallowing hurts but I can drink water."),
        ("Any rash?", "No rash that I have noticed."),
        ("How old are you?", "I am nineteen and live in student halls."),
        ("Has anyone around you been ill?", "A few people on my floor had sore throats."),
        ("Have you taken antibiotics?", "The pharmacy gave me nothing yet."),
        ("Did the earlier clinic run tests?", "They said my monospot test was positive and my spleen felt enlarged."),
    ]),
    dict(id="c12", kind="report", gold="Gout", aliases=["gouty arthritis"], wrong="Septic arthritis", key=None, units=[
        "A 61-year-old man presents with a painful swollen right knee.",
        "The pain started suddenly overnight.",
        "He has a temperature of 37.9 degrees.",
        "The knee is red, hot and he cannot bear weight.",
        "He takes a diuretic for blood pressure.",
        "He drank heavily at a wedding two days ago.",
        "There is no history of trauma.",
        "Inflammatory markers are raised.",
        "Joint aspiration has been requested.",
    ]),
]

NAMES = sorted({c["gold"] for c in CASES} | {c["wrong"] for c in CASES})

CE_SCORES = [35, 45, 55, 60, 65, 70, 75, 80, 85, 90]
PARAPHRASES = [
    "Put another way, the patient is repeating what was already said.",
    "In other words, this restates the earlier remark.",
    "Said differently, the same point is made again.",
    "To rephrase, nothing about the earlier account has changed.",
    "Stated once more in different words, the same detail applies.",
    "Rephrased, the patient confirms the earlier statement.",
    "Once again, the earlier description holds.",
]


def h(*parts):
    return int(hashlib.sha256("\x00".join(map(str, parts)).encode()).hexdigest()[:12], 16)


def prob(*parts, lo=0.05, hi=0.999):
    return round(lo + (hi - lo) * (h(*parts) % 10000) / 9999, 4)


def tokens_of(answer):
    words = answer.split(" ")
    return ["["] + [w if i == 0 else " " + w for i, w in enumerate(words)] + ["]"]


def trace(answer, salt, alternatives=False):
    toks = tokens_of(answer)
    probs = [prob(salt, answer, i, t, lo=0.2) for i, t in enumerate(toks)]
    out = {"text": "".join(toks), "tokens": toks, "token_probs": probs}
    if alternatives:
        alts = []
        for i, (t, p) in enumerate(zip(toks, probs)):
            rest = 1.0 - p
            a = round(rest * 0.6, 4)
            b = round(rest * 0.25, 4)
            row = [{"token": t, "prob": p}, {"token": f"alt{i}a", "prob": a}, {"token": f"alt{i}b", "prob": b}]
            alts.append(sorted(row, key=lambda x: -x["prob"]))
        out["topk_alternatives"] = alts
    return out


def segments(case):
    if case["kind"] == "report":
        return [[("narrator", u)] for u in case["units"]]
    return [[("doctor", q), ("patient", a)] for q, a in case["units"]]


def patient_text(case, seg):
    return segments(case)[seg - 1][-1][1]


def case_json(case):
    units = [{"speaker": s, "text": t} for seg in segments(case) for s, t in seg]
    return {"id": case["id"], "kind": case["kind"], "units": units,
            "gold_diagnosis": case["gold"], "aliases": case["aliases"]}


def profile(name):
    return [
        {"id": 1, "description": f"Presenting complaint typical of {name} reported by the patient.", "importance": "strong"},
        {"id": 2, "description": f"Examination or investigation finding specific to {name}.", "importance": "strong"},
        {"id": 3, "description": f"Risk factor or time course consistent with {name}.", "importance": "moderate"},
        {"id": 4, "description": f"Absence of features pointing away from {name}.", "importance": "weak"},
    ]


def ledger(name, support, score):
    """`support` maps criterion id to the quoted evidence."""
    crit = []
    buckets = {lvl: {imp: [] for imp in ("strong", "moderate", "weak")} for lvl in ("supported", "missing", "contradicted")}
    for c in profile(name):
        ev = support.get(c["id"])
        lvl = "supported" if ev else "missing"
        crit.append({**c, "support_level": lvl, "evidence": ev})
        buckets[lvl][c["importance"]].append(c["id"])
    summary = {f"{lvl}_criteria": {f"{lvl}_{imp}": ids for imp, ids in b.items()} for lvl, b in buckets.items()}
    body = {"criteria_evaluation": crit, "summary": summary,
            "confidence": {"reasoning": "Scored from the supported and missing criteria.", "confidence_score": f"<<{score}>>"}}
    return "```json\n" + json.dumps(body, indent=2) + "\n```"


def diag_samples(case, first_answer, correct):
    """Greedy reply first, then the remaining sampled replies."""
    salt = case["id"] + ("+" if correct else "-")
    n_first = 8 + h(salt) % 5 if correct else 5 + h(salt) % 4
    other = case["wrong"] if correct else case["gold"]
    third = NAMES[h(salt, "third") % len(NAMES)]
    answers = [first_answer] * n_first + [other] * 3
    answers += [third] * (15 - len(answers))
    out = [trace(answers[0], salt, alternatives=True)]
    out += [trace(a, salt + str(i)) for i, a in enumerate(answers[1:], start=1)]
    return out


def main():
    with open(os.path.join(HERE, "cases.jsonl"), "w") as f:
        for c in CASES:
            f.write(json.dumps(case_json(c)) + "\n")
    with open(os.path.join(HERE, "corpus.jsonl"), "w") as f:
        for name in NAMES:
            doc = {"id": "doc-" + name.lower().replace(" ", "-"), "title": name,
                   "text": f"{name} is a clinical condition. The diagnosis of {name} rests on history, examination and targeted tests.\n\n"
                           f"Typical presentations of {name} vary with age and comorbidity."}
            f.write(json.dumps(doc) + "\n")
    nli = []
    for c in CASES:
        for a in c["aliases"]:
            nli.append([c["gold"], a, "entail"])
            nli.append([a, c["gold"], "entail"])
        nli.append([c["gold"], c["wrong"], "contradict"])
        nli.append([c["wrong"], c["gold"], "contradict"])
    with open(os.path.join(HERE, "nli.json"), "w") as f:
        json.dump(nli, f, indent=1)
        f.write("\n")

    entries = []
    tf = {}
    for c in CASES:
        first = patient_text(c, 1)
        second = patient_text(c, 2)
        if c["key"]:
            key = patient_text(c, c["key"])
            entries.append({"name": f"{c['id']} diagnosis correct", "contains": ["determine the final diagnosis", key],
                            "select": "seed", "responses": diag_samples(c, c["gold"], True)})
        entries.append({"name": f"{c['id']} diagnosis early", "contains": ["determine the final diagnosis", first],
                        "select": "seed", "responses": diag_samples(c, c["wrong"], False)})
        conf = "evaluate how well each diagnostic criterion"
        if c["key"]:
            key = patient_text(c, c["key"])
            hi = 55 + h(c["id"], "hi") % 8 * 5
            entries.append({"name": f"{c['id']} ledger correct", "contains": [conf, profile(c["gold"])[0]["description"], key],
                            "responses": [ledger(c["gold"], {1: first, 2: key}, hi)]})
        entries.append({"name": f"{c['id']} ledger wrong detailed", "contains": [conf, profile(c["wrong"])[0]["description"], second],
                        "responses": [ledger(c["wrong"], {1: first, 3: second}, 30 + h(c["id"], "mid") % 3 * 5)]})
        entries.append({"name": f"{c['id']} ledger wrong sparse", "contains": [conf, profile(c["wrong"])[0]["description"], first],
                        "responses": [ledger(c["wrong"], {1: first}, 15 + h(c["id"], "lo") % 3 * 5)]})
        entries.append({"name": f"{c['id']} p_true correct", "contains": ["Is the proposed answer:", "Proposed Answer: " + c["gold"]],
                        "select": "seed", "responses": ["(A) True"] * 3 + ["(B) False"]})
    for name in NAMES:
        entries.append({"name": f"keyword {name}", "contains": ["primary diagnostic keyword", "Diagnosis: " + name],
                        "responses": [name.lower()]})
        entries.append({"name": f"profile {name}", "contains": ["structured diagnostic criteria", "Condition: " + name],
                        "responses": [json.dumps(profile(name), indent=2)]})
    entries += [
        {"name": "p_true", "contains": ["Is the proposed answer:"], "select": "seed", "responses": ["(A) True", "(B) False", "(B) False"]},
        {"name": "ce", "contains": ["only answer with your score"], "select": "prompt_digest",
         "responses": [f"[{s}]" for s in CE_SCORES]},
        {"name": "ce_cot", "contains": ["Provide your explanation first"], "select": "prompt_digest",
         "responses": [f"The findings partly fit the proposed answer. Confidence: [{s}]" for s in CE_SCORES]},
        {"name": "ce_topk", "contains": ["5 best guess"], "select": "prompt_digest",
         "responses": [f"G1: proposed answer [{s}]\nG2: alternative [{100 - s}]" for s in CE_SCORES]},
        {"name": "paraphrase", "contains": ["semantically equivalent paraphrased content"], "select": "prompt_digest",
         "responses": PARAPHRASES},
    ]
    for e in entries:
        for r in e["responses"]:
            if isinstance(r, dict):
                for t in r["tokens"]:
                    tf.setdefault(t, prob("uncond", t, lo=0.01, hi=0.9))
    mock = {"capabilities": {"returns_generated_logprobs": True, "returns_topk_alternatives": True,
                             "supports_teacher_forced_scoring": True, "max_top_logprobs": 20},
            "teacher_forced": dict(sorted(tf.items())), "entries": entries}
    with open(os.path.join(HERE, "mock.json"), "w") as f:
        json.dump(mock, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
