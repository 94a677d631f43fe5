"""A self-consistent synthetic research world for fully offline runs.

The world fabricates obscure organisations, web pages about them, and model
behavior around them. Every reply is a pure function of (world seed, request
content), so a pipeline run over mock providers is byte-reproducible across
schedules and worker counts.

The pieces interlock: compendium pages mention fabricated entities; the
explorer invents facts carrying a per-entity "archive code"; generated
questions embed that code; the agent's search resolves the code back to the
entity page, so correct answers survive the curation filters.
"""

from __future__ import annotations

import hashlib
import json
import re
from importlib import resources
from typing import Optional

from ..records import canonical_json
from .base import ChatRequest, CostLedger, FetchClient, InstrumentedChat, ProviderSuite, SearchClient, WikiClient
from .mock import (
    MockChatProvider,
    MockFetchProvider,
    MockSandbox,
    MockSearchProvider,
    MockWikiProvider,
)

_FIRST = [
    "Auric", "Brindle", "Cinder", "Delft", "Ember", "Fennel", "Gloam", "Harrow",
    "Isling", "Juniper", "Kestrel", "Lumen", "Myrtle", "Nocturne", "Oriel", "Pallas",
    "Quill", "Rosin", "Saffron", "Thistle", "Umber", "Vesper", "Wicker", "Yarrow",
]
_SECOND = [
    "Annex", "Atelier", "Bindery", "Circle", "Commons", "Conservatory", "Foundry",
    "Guild", "Junction", "Ledgerhouse", "Observatory", "Orchard", "Pavilion", "Press",
    "Repository", "Society", "Symposium", "Workshop",
]

_SLUG_RE = re.compile(r"archive code ([a-z0-9]+(?:-[a-z0-9]+)*)")
_THINK_OPENERS = [
    "Let me trace the archive code in this task.",
    "The registry reference looks like the strongest lead.",
    "I should resolve the catalogue identifier first.",
    "Starting from the archive code seems most direct.",
]

PAGES_PER_NOUN = 2
ENTITIES_PER_PAGE = 2


def load_mock_nouns() -> list[str]:
    text = resources.files("deepforge.data").joinpath("mock_nouns.txt").read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


def slug_of(name: str) -> str:
    return "-".join(part.lower() for part in name.split())


def name_from_slug(slug: str) -> str:
    return " ".join(part.capitalize() for part in slug.split("-"))


class MockWorld:
    def __init__(self, seed: int):
        self.seed = seed
        self.nouns = load_mock_nouns()

    # --- deterministic generators -------------------------------------

    def _digest(self, *parts) -> int:
        payload = canonical_json([self.seed, *parts]).encode("utf-8")
        return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")

    def entity_name(self, noun: str, page: int, slot: int) -> str:
        h = self._digest("entity", noun, page, slot)
        first = _FIRST[h % len(_FIRST)]
        second = _SECOND[(h >> 8) % len(_SECOND)]
        return f"{first} {noun.capitalize()} {second}"

    def neighbor_name(self, name: str, slot: int) -> str:
        h = self._digest("neighbor", name, slot)
        first = _FIRST[h % len(_FIRST)]
        second = _SECOND[(h >> 8) % len(_SECOND)]
        third = _FIRST[(h >> 16) % len(_FIRST)]
        candidate = f"{first} {second} {third}side"
        if candidate == name:
            candidate = f"{first} {second} {third}gate"
        return candidate

    def entity_facts(self, name: str) -> list[str]:
        h = self._digest("facts", name)
        year = 1900 + h % 120
        rooms = 3 + (h >> 16) % 40
        return [
            f"Catalogued under archive code {slug_of(name)}.",
            f"First registered in {year}.",
            f"Maintains {rooms} regional reading rooms.",
        ]

    def entity_relations(self, name: str) -> dict[str, str]:
        relations = {}
        for slot in range(2):
            neighbor = self.neighbor_name(name, slot)
            verb = ["shares a founding patron with", "co-publishes a seasonal bulletin with"][slot % 2]
            relations[neighbor] = f"The organisation {verb} {neighbor}."
        return relations

    # --- fake web ------------------------------------------------------

    def compendium_url(self, noun: str, page: int) -> str:
        return f"https://mock.test/{noun}/{page}"

    def entity_url(self, name: str) -> str:
        return f"https://mock.test/entity/{slug_of(name)}"

    def compendium_html(self, noun: str, page: int) -> str:
        names = [self.entity_name(noun, page, slot) for slot in range(ENTITIES_PER_PAGE)]
        mentions = "; ".join(names)
        listing = " ".join(f"{n} is catalogued under archive code {slug_of(n)}." for n in names)
        return (
            "<html><head><title>Compendium</title><style>body{font:serif}</style></head>"
            "<body><script>var tracker = 1;</script>"
            f"<h1>Field notes on {noun}, volume {page + 1}</h1>"
            f"<p>Collected observations concerning {noun} and allied trades.</p>"
            f"<p>Notable mentions: {mentions}.</p>"
            f"<p>{listing}</p>"
            "</body></html>"
        )

    def entity_html(self, slug: str) -> str:
        name = name_from_slug(slug)
        facts = " ".join(self.entity_facts(name))
        relations = " ".join(self.entity_relations(name).values())
        return (
            "<html><head><title>Registry</title></head><body>"
            f"<h1>{name}</h1>"
            f"<p>This page documents {name} (archive code {slug}).</p>"
            f"<p>{facts}</p>"
            f"<p>{relations}</p>"
            "</body></html>"
        )

    def fetch_page(self, url: str) -> str:
        entity_match = re.fullmatch(r"https://mock\.test/entity/([a-z0-9\-]+)", url)
        if entity_match:
            return self.entity_html(entity_match.group(1))
        noun_match = re.fullmatch(r"https://mock\.test/([a-z]+)/(\d+)", url)
        if noun_match and noun_match.group(1) in self.nouns:
            return self.compendium_html(noun_match.group(1), int(noun_match.group(2)))
        return "<html><body><p>A quiet page with nothing of note.</p></body></html>"

    def search_rows(self, query: str) -> list[dict]:
        slugs = _SLUG_RE.findall(query)
        if slugs:
            rows = []
            for slug in dict.fromkeys(slugs):
                name = name_from_slug(slug)
                rows.append(
                    {
                        "title": f"{name} - registry entry",
                        "link": self.entity_url(name),
                        "snippet": f"Registry notes for {name}, archive code {slug}.",
                    }
                )
            return rows
        normalized = query.strip().lower()
        if normalized in self.nouns:
            return [
                {
                    "title": f"Field notes on {normalized}, volume {page + 1}",
                    "link": self.compendium_url(normalized, page),
                    "snippet": f"Observations concerning {normalized} and allied trades.",
                }
                for page in range(PAGES_PER_NOUN)
            ]
        h = self._digest("misc", normalized)
        return [
            {
                "title": f"Miscellany {h % 1000}-{i}",
                "link": f"https://mock.test/misc/{h % 1000}/{i}",
                "snippet": "General notes without registry references.",
            }
            for i in range(3)
        ]

    def wiki_article(self, name: str) -> Optional[str]:
        if name.startswith("NoSuchEntity"):
            return None
        facts = " ".join(self.entity_facts(name))
        return f"{name} is a sparsely documented organisation. {facts}"

    # --- chat handlers ---------------------------------------------------

    def _prompt_text(self, request: ChatRequest) -> str:
        return "\n".join(m.content for m in request.messages)

    def handle_nouns(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "diverse Chinese or English nouns" not in text:
            return None
        match = re.search(r"Please generate (\d+) diverse", text)
        batch = int(match.group(1)) if match else 8
        excluded = set(re.findall(r"^- (.+)$", text, flags=re.MULTILINE))
        fresh = [n for n in self.nouns if n not in excluded]
        if not fresh:
            # Saturated pool: repeat old nouns, which the caller must reject.
            return "\n".join(self.nouns[:batch])
        return "\n".join(fresh[:batch])

    def handle_extraction(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "Identify the distinct named entities" not in text:
            return None
        match = re.search(r"Notable mentions: ([^\n]+?)\.(?:\n|$)", text)
        if not match:
            return ""
        names = [n.strip() for n in match.group(1).split(";") if n.strip()]
        return "\n".join(f"{name} | a sparsely documented organisation" for name in names)

    def handle_explorer(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "gather ample information about the entity" not in text:
            return None
        match = re.search(r"Here is the entity you should explore: ([^\n(]+?)(?: \(|\n|$)", text)
        name = match.group(1).strip() if match else "Unnamed Subject"
        observations = sum(1 for m in request.messages if m.content.startswith("<tool_response>"))
        if observations == 0:
            call = json.dumps({"name": "search_wiki", "arguments": {"entity_list": [name]}})
            return f"<function_call>{call}</function_call>"
        payload = {
            "entity_self": self.entity_facts(name),
            "entity_relations": self.entity_relations(name),
        }
        return f"<result>{json.dumps(payload, ensure_ascii=False, indent=2)}</result>"

    def handle_qa(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "generate a question-answer pair based on the given entity graph" not in text:
            return None
        match = re.search(r"Here is the entity graph:\n(\{.*?\})\n\nYour output", text, flags=re.DOTALL)
        if not match:
            return None
        graph = json.loads(match.group(1))
        root = graph["root"]
        record = graph["records"][root]
        facts = " ".join(record["entity_self"])
        year_match = re.search(r"First registered in (\d{4})", facts)
        rooms_match = re.search(r"Maintains (\d+) regional reading rooms", facts)
        slug_match = _SLUG_RE.search(facts)
        neighbor = sorted(record["entity_relations"])[0] if record["entity_relations"] else "an allied workshop"
        year = year_match.group(1) if year_match else "1950"
        rooms = rooms_match.group(1) if rooms_match else "7"
        slug = slug_match.group(1) if slug_match else slug_of(root)
        question = (
            f"A quietly run organisation, first registered in {year}, maintains {rooms} regional "
            f"reading rooms and appears in registries under archive code {slug}. It shares its "
            f"founding patron with {neighbor}. What is the name of this organisation?"
        )
        thinking = (
            "The target is obscure; the clues span its registration era, its holdings, and one "
            "related organisation, so resolving it needs registry lookups rather than recall."
        )
        return (
            f"<thinking>\n{thinking}\n</thinking>\n"
            f"<question>\n{question}\n</question>\n"
            f"<answer>\n{root}\n</answer>"
        )

    def handle_prune(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "Rewrite the question below to blur precise identifiers" not in text:
            return None
        q_match = re.search(r"<question>\n(.*?)\n</question>", text, flags=re.DOTALL)
        a_match = re.search(r"<answer>\n(.*?)\n</answer>", text, flags=re.DOTALL)
        if not q_match or not a_match:
            return None
        question = q_match.group(1)

        def blur_year(match: re.Match) -> str:
            year = int(match.group(1))
            half = "early" if year % 10 < 5 else "late"
            return f"first registered in the {half} {year // 10 * 10}s"

        question = re.sub(r"first registered in (\d{4})", blur_year, question)
        question = re.sub(
            r"maintains (\d+) regional reading rooms",
            "maintains a modest number of regional reading rooms",
            question,
        )
        return f"<question>\n{question}\n</question>\n<answer>\n{a_match.group(1)}\n</answer>"

    def handle_qa_validation(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "Reply with exactly one word: ACCEPT or REJECT." not in text:
            return None
        return "ACCEPT"

    def handle_summary(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "Summarize the content below with respect to the query." not in text:
            return None
        query_match = re.search(r"Query: ([^\n]*)", text)
        content_match = re.search(r"Content:\n(.*)\Z", text, flags=re.DOTALL)
        query = query_match.group(1) if query_match else ""
        content = content_match.group(1) if content_match else ""
        keywords = {w for w in re.split(r"\W+", query.lower()) if len(w) >= 4}
        relevant = [
            line.strip()
            for line in content.splitlines()
            if line.strip() and keywords & {w for w in re.split(r"\W+", line.lower()) if len(w) >= 4}
        ]
        if not relevant:
            return "The page contains nothing relevant to the query."
        return "Relevant to the query: " + " ".join(relevant)

    def handle_correctness(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "semantically equivalent to the ground truth" not in text:
            return None
        gold_match = re.search(r"Ground Truth: ([^\n]*)", text)
        answer_match = re.search(r"Model Answer: ([^\n]*)", text)
        gold = (gold_match.group(1) if gold_match else "").strip().lower()
        answer = (answer_match.group(1) if answer_match else "").strip().lower()
        verdict = "yes" if gold and (gold == answer or gold in answer) else "no"
        return json.dumps({"equivalent": verdict})

    def handle_quality(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "professional data quality evaluation expert" not in text:
            return None
        return json.dumps(
            {
                "quality_score": "Qualified",
                "reason": "The reasoning follows the tool evidence and the answer is supported.",
                "issues": [],
            }
        )

    def handle_scoring(self, request: ChatRequest) -> Optional[str]:
        text = self._prompt_text(request)
        if "Score the trajectory below on three dimensions" not in text:
            return None
        h = self._digest("score", text)
        dims = {
            "logical_consistency": round(4 + (h % 600) / 100, 2),
            "factual_correctness": round(4 + ((h >> 20) % 600) / 100, 2),
            "overall_quality": round(4 + ((h >> 40) % 600) / 100, 2),
        }
        return json.dumps(dims)

    def chat_handlers(self) -> list:
        return [
            self.handle_nouns,
            self.handle_extraction,
            self.handle_explorer,
            self.handle_qa,
            self.handle_prune,
            self.handle_qa_validation,
            self.handle_summary,
            self.handle_correctness,
            self.handle_quality,
            self.handle_scoring,
        ]

    # --- agent policy ---------------------------------------------------

    def policy_handler(self, rollout_seed: int):
        def handle(request: ChatRequest) -> Optional[str]:
            system = request.messages[0].content if request.messages else ""
            if "You are a deep research agent" not in system:
                return None
            question = ""
            for message in request.messages:
                if message.role == "user" and not message.content.startswith("<tool_response>"):
                    question = message.content
                    break
            observations = [m.content for m in request.messages if m.content.startswith("<tool_response>")]
            opener = _THINK_OPENERS[(rollout_seed + len(observations)) % len(_THINK_OPENERS)]
            think = f"{opener} (route {rollout_seed % 99991})"
            if not observations:
                call = json.dumps({"name": "search", "arguments": {"query": [question]}})
                return f"<think>{think}</think><tool_call>{call}</tool_call>"
            last = observations[-1]
            if len(observations) == 1:
                url_match = re.search(r"https://mock\.test/entity/[a-z0-9\-]+", last)
                if url_match:
                    call = json.dumps(
                        {"name": "visit_urls", "arguments": {"urls": [url_match.group(0)], "query": question}}
                    )
                    return f"<think>{think}</think><tool_call>{call}</tool_call>"
                return f"<think>{think}</think><answer>Unknown</answer>"
            name_match = re.search(r"documents ([A-Z][A-Za-z \-]+?) \(archive code", last)
            answer = name_match.group(1) if name_match else "Unknown"
            return f"<think>{think}</think><answer>{answer}</answer>"

        return handle

    def policy_provider(self, rollout_seed: int) -> MockChatProvider:
        return MockChatProvider(handlers=[self.policy_handler(rollout_seed)])

    # --- provider bundle --------------------------------------------------

    def build_suite(self, unit_prices: Optional[dict[str, float]] = None) -> ProviderSuite:
        ledger = CostLedger(unit_prices=unit_prices)
        chat = InstrumentedChat(MockChatProvider(handlers=self.chat_handlers()), ledger, name="llm")
        search = SearchClient(MockSearchProvider(generator=self.search_rows), ledger, name="search")
        fetch = FetchClient(MockFetchProvider(generator=self.fetch_page), ledger, name="fetch")
        wiki = WikiClient(MockWikiProvider(generator=self.wiki_article), ledger, name="wiki")
        return ProviderSuite(chat=chat, search=search, fetch=fetch, wiki=wiki, sandbox=MockSandbox(), ledger=ledger)
