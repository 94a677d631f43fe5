"""Contracts of the synthetic offline world itself."""

import json

import pytest

from deepforge.providers import ChatMessage, ChatRequest
from deepforge.providers.world import (
    ENTITIES_PER_PAGE,
    PAGES_PER_NOUN,
    MockWorld,
    load_mock_nouns,
    name_from_slug,
    slug_of,
)


@pytest.fixture(scope="module")
def world():
    return MockWorld(seed=13)


def req(*contents, roles=None):
    roles = roles or ["user"] * len(contents)
    return ChatRequest(messages=[ChatMessage(role=r, content=c) for r, c in zip(roles, contents)])


def test_slug_name_bijection(world):
    for noun in load_mock_nouns()[:8]:
        for page in range(PAGES_PER_NOUN):
            for slot in range(ENTITIES_PER_PAGE):
                name = world.entity_name(noun, page, slot)
                assert name_from_slug(slug_of(name)) == name


def test_world_is_seed_sensitive():
    a = MockWorld(seed=1).entity_name("archive", 0, 0)
    b = MockWorld(seed=2).entity_name("archive", 0, 0)
    assert a != b


def test_search_routes_archive_codes_to_entity_pages(world):
    name = world.entity_name("archive", 0, 0)
    rows = world.search_rows(f"an organisation catalogued under archive code {slug_of(name)} somewhere")
    assert rows[0]["link"] == world.entity_url(name)
    assert name in rows[0]["title"]


def test_search_routes_nouns_to_compendium_pages(world):
    rows = world.search_rows("archive")
    assert [r["link"] for r in rows] == [world.compendium_url("archive", p) for p in range(PAGES_PER_NOUN)]


def test_search_fallback_is_deterministic(world):
    a = world.search_rows("completely unrelated query")
    b = world.search_rows("completely unrelated query")
    assert a == b
    assert all(r["link"].startswith("https://mock.test/misc/") for r in a)


def test_fetch_compendium_and_entity_pages_interlock(world):
    from deepforge.htmltext import clean_html

    page = clean_html(world.fetch_page(world.compendium_url("archive", 0)))
    assert "Notable mentions:" in page
    mentioned = world.entity_name("archive", 0, 0)
    assert mentioned in page

    entity_page = clean_html(world.fetch_page(world.entity_url(mentioned)))
    assert f"This page documents {mentioned} (archive code {slug_of(mentioned)})" in entity_page


def test_noun_handler_respects_exclusion(world):
    nouns = load_mock_nouns()
    prompt = (
        "Please generate 4 diverse Chinese or English nouns randomly.\n"
        "Nouns that have already appeared:\n" + "\n".join(f"- {n}" for n in nouns[:3])
    )
    reply = world.handle_nouns(req(prompt))
    got = reply.splitlines()
    assert len(got) == 4
    assert not set(got) & set(nouns[:3])


def test_noun_handler_repeats_when_saturated(world):
    nouns = load_mock_nouns()
    prompt = (
        "Please generate 4 diverse Chinese or English nouns randomly.\n"
        "Nouns that have already appeared:\n" + "\n".join(f"- {n}" for n in nouns)
    )
    reply = world.handle_nouns(req(prompt))
    assert set(reply.splitlines()) <= set(nouns)


def test_explorer_handler_two_phase(world):
    name = "Gloam Ledgerhouse Vesperside"
    opening = f"gather ample information about the entity\nHere is the entity you should explore: {name}"
    first = world.handle_explorer(req(opening))
    assert "<function_call>" in first
    call = json.loads(first.split("<function_call>")[1].split("</function_call>")[0])
    assert call["name"] == "search_wiki"
    assert call["arguments"]["entity_list"] == [name]

    second = world.handle_explorer(
        req(opening, "<tool_response>wiki text</tool_response>", roles=["user", "user"])
    )
    assert "<result>" in second
    payload = json.loads(second.split("<result>")[1].split("</result>")[0])
    assert payload["entity_self"]
    assert all(target != name for target in payload["entity_relations"])


def test_policy_handler_full_episode(world):
    name = world.entity_name("archive", 0, 1)
    question = f"Which organisation is catalogued under archive code {slug_of(name)}?"
    system = "You are a deep research agent. ..."
    policy = world.policy_provider(rollout_seed=5)

    first = policy.chat(req(system, question, roles=["system", "user"])).text
    assert '"name": "search"' in first

    search_obs = f"<tool_response>{json.dumps(world.search_rows(question))}</tool_response>"
    second = policy.chat(req(system, question, search_obs, roles=["system", "user", "user"])).text
    assert '"name": "visit_urls"' in second

    summary_obs = f"<tool_response>This page documents {name} (archive code {slug_of(name)}).</tool_response>"
    third = policy.chat(
        req(system, question, search_obs, summary_obs, roles=["system", "user", "user", "user"])
    ).text
    assert f"<answer>{name}</answer>" in third


def test_policy_rollouts_differ_by_seed(world):
    question = "Which organisation is catalogued under archive code auric-archive-press?"
    system = "You are a deep research agent. ..."
    a = world.policy_provider(rollout_seed=1).chat(req(system, question, roles=["system", "user"])).text
    b = world.policy_provider(rollout_seed=2).chat(req(system, question, roles=["system", "user"])).text
    assert a != b


def test_scoring_handler_in_range_and_content_sensitive(world):
    prompt_a = "Score the trajectory below on three dimensions\nTrajectory: alpha"
    prompt_b = "Score the trajectory below on three dimensions\nTrajectory: beta"
    scores_a = json.loads(world.handle_scoring(req(prompt_a)))
    scores_b = json.loads(world.handle_scoring(req(prompt_b)))
    for scores in (scores_a, scores_b):
        for value in scores.values():
            assert 0 <= value <= 10
    assert scores_a != scores_b


def test_wiki_article_generator(world):
    assert world.wiki_article("NoSuchEntityAnything") is None
    text = world.wiki_article("Gloam Circle Annex")
    assert "Gloam Circle Annex" in text
    assert "archive code gloam-circle-annex" in text
