#!/usr/bin/env python3
"""Regenerates the phishing fixture: posts, canned scanner reports, the
blocklist feed, a filled review sheet, follower edges and truth.csv.

Every URL's expected label is decided here from its planted attributes:
malicious when at least one engine says malicious, when a verified
blocklist entry matches, or when the review sheet says so; benign
otherwise.
"""
import csv
import hashlib
import json
import os
import random
from datetime import datetime, timedelta, timezone

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "phishing")
VT = os.path.join(HERE, "vt")
rng = random.Random(20200801)

# (canonical url, malicious engines, suspicious engines, has report,
#  blocklist entry: None | "verified" | "unverified", review verdict)
SITES = []
for i in range(18):
    SITES.append((f"http://login-verify{i}.example/account", 1 + (i * 5) % 12, i % 3, True, None, None))
for i in range(14):
    SITES.append((f"https://news{i}.example/article/{i}", 0, (i % 4 == 0) * 2, True, None, None))
SITES += [
    ("https://paypa1-secure.example/signin", 0, 0, True, "verified", None),
    ("http://apple-id-check.example/", 0, 1, True, "verified", None),
    ("https://bank-update.example/verify?id=7", 0, 0, True, "verified", None),
    ("https://shop-deals.example/promo", 0, 0, True, "unverified", None),
    ("http://fresh-phish.example/a", 0, 0, False, "verified", None),
    ("https://unknown-blog.example/post", 0, 0, False, None, None),
    ("http://quiet-site.example/x", 0, 0, False, None, None),
    ("https://parcel-notice.example/track", 0, 0, True, None, "malicious"),
]


def truth(site):
    url, mal, _susp, _has, listed, review = site
    if mal >= 1 or listed == "verified" or review == "malicious":
        return "malicious"
    return "benign"


def defang(url, style):
    scheme, rest = url.split("://", 1)
    host, _, tail = rest.partition("/")
    tail = "/" + tail if _ else ""
    if style == 0:
        return scheme.replace("tt", "xx") + "[:]//" + host.replace(".", "[.]") + tail
    if style == 1:
        return scheme.replace("tt", "XX") + ":[//]" + host.replace(".", "[dot]") + tail
    if style == 2:
        return scheme + "://" + host.replace(".", "[.]") + tail
    if style == 3:
        return scheme.replace("tt", "xx") + "[://]" + host.replace(".", "(.)") + tail
    return scheme.replace("tt", "xx") + "://" + host.upper().replace(".", "[.]") + tail


ENGINES = [f"Engine{i:02d}" for i in range(70)]


def report_body(url, mal, susp):
    results = {}
    for i, e in enumerate(ENGINES):
        if i < mal:
            cat, res = "malicious", "phishing"
        elif i < mal + susp:
            cat, res = "suspicious", "suspicious"
        elif i % 9 == 0:
            cat, res = "undetected", "unrated"
        else:
            cat, res = "harmless", "clean"
        results[e] = {"category": cat, "engine_name": e, "result": res}
    h = hashlib.sha256(url.encode()).hexdigest()
    return h, {"data": {"id": h, "type": "url", "attributes": {"url": url, "last_analysis_results": results}}}


def main():
    os.makedirs(OUT, exist_ok=True)
    os.makedirs(VT, exist_ok=True)
    for f in os.listdir(VT):
        os.remove(os.path.join(VT, f))
    for url, mal, susp, has, _l, _r in SITES:
        if has:
            h, body = report_body(url, mal, susp)
            with open(os.path.join(VT, h + ".json"), "w") as fh:
                json.dump(body, fh, indent=1)
                fh.write("\n")
    # A report for a URL that only appears in dropped posts.
    h, body = report_body("http://offtopic.example/", 5, 0)
    with open(os.path.join(VT, h + ".json"), "w") as fh:
        json.dump(body, fh, indent=1)
        fh.write("\n")

    feed = []
    for n, (url, *_rest) in enumerate(SITES):
        listed = _rest[3]
        if listed:
            shown = url.replace("apple-id-check.example", "APPLE-ID-CHECK.example")
            feed.append({"phish_id": 9000 + n, "url": shown, "verified": "yes" if listed == "verified" else "no"})
    with open(os.path.join(VT, "blocklist.json"), "w") as fh:
        json.dump(feed, fh, indent=1)
        fh.write("\n")

    day = datetime(2020, 8, 1, tzinfo=timezone.utc)
    collected = (day + timedelta(hours=23)).strftime("%Y-%m-%dT%H:%M:%SZ")
    users = [f"user{i:03d}" for i in range(60)]
    posts = []

    def add(text, author, created, retweets, retweet_of=None):
        pid = f"t{len(posts) + 1:04d}"
        posts.append({
            "id": pid, "text": text, "created_at": created.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "author": author, "lang": "en", "has_media": False, "urls": [],
            "like_count": rng.randrange(0, 30), "retweet_count": retweets, "reply_count": rng.randrange(0, 5),
            "retweet_of": retweet_of, "collected_at": collected,
        })
        return pid

    def when():
        return day + timedelta(seconds=rng.randrange(0, 80000))

    # Every site at least once in a kept post; a few sites form campaigns.
    kept_urls = []
    for n, site in enumerate(SITES):
        times = 5 if n in (0, 3, 20, 33) else 1 + (n % 3)
        kept_urls += [n] * times
    rng.shuffle(kept_urls)
    pairs = []
    while kept_urls:
        k = 2 if len(kept_urls) > 1 and rng.random() < 0.15 else 1
        pairs.append(kept_urls[:k])
        kept_urls = kept_urls[k:]
    for group in pairs:
        links = " and ".join(defang(SITES[n][0], rng.randrange(5)) for n in group)
        text = rng.choice([
            "Phishing alert: {} do not click",
            "New phishing page spotted {} #phishing",
            "Is this phishing? {}",
            "PSA phishing campaign via SMS {} report it",
        ]).format(links)
        add(text, rng.choice(users), when(), rng.choice([0, 0, 1, 2, 3, 5, 12]))
    kept = len(posts)

    # On-day keyword posts without defanged links.
    while len(posts) < kept + 20:
        add(rng.choice([
            "Phishing awareness training today, stay safe",
            "Reported a phishing email to IT https://plain.example/help",
            "phishing tips thread",
        ]), rng.choice(users), when(), rng.randrange(0, 3))
    # Posts dropped by the filters: older than the collection day, or no keyword.
    while len(posts) < 200:
        old = len(posts) % 2 == 0
        text = ("Phishing site hxxp://offtopic[.]example/ watch out" if old
                else "Look at this hxxp://offtopic[.]example/ scam")
        created = day - timedelta(days=1, seconds=rng.randrange(0, 80000)) if old else when()
        add(text, rng.choice(users), created, 0)

    with open(os.path.join(OUT, "posts.jsonl"), "w") as fh:
        for p in posts:
            fh.write(json.dumps(p) + "\n")

    with open(os.path.join(OUT, "truth.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["url", "label"])
        for site in SITES:
            w.writerow([site[0], truth(site)])

    with open(os.path.join(OUT, "review.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["url", "first_seen_post", "screenshot", "verdict", "analyst", "notes"])
        for site in SITES:
            if site[5]:
                w.writerow([site[0], "", "shot-1.png", site[5], "analyst1", "fake courier login"])
        w.writerow(["https://news0.example/article/0", "", "", "", "", ""])

    with open(os.path.join(OUT, "follows.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target"])
        edges = set()
        for a in range(60):
            group = a // 20
            for _ in range(4):
                b = group * 20 + rng.randrange(20)
                if b != a:
                    edges.add((a, b))
            if rng.random() < 0.1:
                edges.add((a, rng.randrange(60)))
        for a, b in sorted(edges):
            if a != b:
                w.writerow([users[a], users[b]])


if __name__ == "__main__":
    main()
