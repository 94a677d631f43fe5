"""Prompt templates for every LLM-facing step in the pipeline.

Templates are versioned here as plain strings so that downstream filters can
rely on their exact markers. Render helpers fill the placeholders; JSON
braces inside templates are doubled.
"""

from __future__ import annotations

import json

from .records import canonical_json

NOUN_PROMPT = """Please generate {batch_size} diverse Chinese or English nouns randomly, including abstract and concrete nouns.

They should cover various fields such as technology, geography, culture, art, nature, brands, movies, plants, animals, and organizations.

Requirements:
- No duplicates allowed
- No numbering required
- Each noun should be on a separate line
- Only output the nouns themselves, without any explanations
- Do not include any nouns that have already appeared.
{exclusion_block}"""


def render_noun_prompt(batch_size: int, exclusion: list[str]) -> str:
    block = ""
    if exclusion:
        listing = "\n".join(f"- {noun}" for noun in exclusion)
        block = f"\nNouns that have already appeared:\n{listing}\n"
    return NOUN_PROMPT.format(batch_size=batch_size, exclusion_block=block)


EXTRACTION_PROMPT = """You are given the visible text of a web page. Identify the distinct named entities mentioned in it.

Prioritize long-tail and low-frequency entities: obscure people, niche organizations, little-known works, uncommon places or products. Skip famous, high-frequency names and generic words.

Output one entity per line in the form:
name | one-line description

Output nothing else. If the text mentions no suitable entities, output nothing.

Page text:
{page_text}"""


def render_extraction_prompt(page_text: str, max_chars: int = 6000) -> str:
    return EXTRACTION_PROMPT.format(page_text=page_text[:max_chars])


EXPLORER_PROMPT = """You are an agent that can search the web for information and crawl the webpage content of a url.

Your task is to gather ample information about the entity, including two core aspects:
1. The entity itself, such as its description, properties, relevant events, etc.
2. The relationships between the entity and other entities, such as its neighbors, etc.

You can use the following tools to help you:
- search_google: to search the web for information
- crawl_url_content: to crawl the webpage content of a url
- search_wiki: to search the wikipedia for information

Here are the tool schemas:

{tool_schemas}

If you want to use tools, please output in json format (with name and arguments), enclosed by <function_call> </function_call> tags.

Please output only one function call at a time.

You should first leverage tools to gather information about the entity, and finally output the final result in the following json format:
<result>
{{
    "entity_self": [
        "value1",
        "value2",
        "value3"
    ],
    "entity_relations": {{
        "entity1": "relation1",
        "entity2": "relation2",
        "entity3": "relation3"
    }}
}}
</result>

For example, if the entity is "Nginx", the value in "entity_self" can be
"Nginx is an HTTP web server, reverse proxy, content cache, and load balancer.",
"nginx-1.29.1 mainline has been released in 2025-08-13",
"nginx was publicly released in 2004"
"Nginx is free and open-source software, released under the terms of the 2-clause BSD license"

the value in "entity_relations" can be "Igor Sysoev": "Nginx was created by Russian developer Igor Sysoev"
Now please start to gather information about the entity.

When generating properties and relations, do not use high-frequency entities instead of unpopular entities (such as low-profile players, niche research institutions, non-mainstream foundations, etc.)

Here is the entity you should explore: {name} {description}"""


def render_explorer_prompt(name: str, description: str, tool_schemas: dict) -> str:
    return EXPLORER_PROMPT.format(
        name=name,
        description=f"({description})" if description else "",
        tool_schemas=json.dumps(tool_schemas, ensure_ascii=False, indent=2),
    )


QA_PROMPT = """You are a helpful assistant that can generate a question-answer pair based on the given entity information.

I have already collected a bunch of entities and their related information. For each entity, I have collected its properties and relations.

The properties are used to describe the entity itself, and the relations are used to describe the relationships between the entity and other entities, which can be used to generate multi-hop search questions.

Your task is to generate a challenging question-answer pair to test a model's ability to perform deep, multi-hop searches on the web. The question must force the model to navigate through information about obscure entities and cannot be answered using common knowledge alone.

Core Principles:
1. Focus on Obscurity: The question must be centered around unpopular or lesser-known entities, rather than high-frequency entities.
2. Promote Web Search: The question must be constructed so that answering it requires iterative web searches to verify relationships and properties. It should not be solvable through guesswork or general knowledge.
3. Embrace Ambiguity & Fuzziness: Descriptions must be vague and indirect. Avoid precise identifiers that act as direct lookup keys.
4. Use: Ranges (e.g., "the 1970s," "a budget between $10-20 million"), relative terms (e.g., "a short-lived show," "a moderately successful album"), and ambiguous descriptors (e.g., "a politician involved in an early environmental policy").
5. Avoid: Exact dates (e.g. "2008 year"), specific numbers (e.g. "83rd minute"), well-known proper names (people, places, awards), clues that are easy to deduce, and unique superlatives (such as "the first," "the highest-grossing", "The city with the second highest wind speed"), which can be directly searched and found through search engines.

Construction Guidelines:
1. Source Material: Use the provided information on an entity-including its properties and its relations to other entities-as the foundation for your question.
2. Question Type: The final answer should be the name of the target entity.
3. Language: The language of the generated question must match the language of the provided entity information, either Chinese or English.
4. Describing the Entity: Build the question by weaving together vague descriptions of the entity's properties and its relations to other obscure entities. The path to the answer should require multiple logical "hops." For example:

Hop 1: Identify Entity A based on its vague relation to a slightly more known concept.
Hop 2: Discover that Entity A worked on a project with Entity B.
Hop 3: Find a vague property of Entity B that leads to the final target, Entity C.

Example of a Good vs. Bad Question:

Bad (Too Direct): "What is the name of the player who died at the age of 44?" This uses a unique, precise fact that can be directly searched.

Good (Vague & Multi-Hop): "A supporting actor from a sci-fi film released in the late 80s later directed a made-for-TV movie that was nominated for a minor industry award in the mid-1990s. What is the name of this director?" This requires finding the actor, then their directing work, then filtering by a specific award timeframe.

Your Output: Generate a single question-answer pair that adheres to all the principles above.

Now please generate a question-answer pair based on the given entity graph.

Here is the entity graph:
{entity_infos}

Your output should be in the following format:
<thinking>
[YOUR THINKING HERE, DESCRIBING WHY YOU WANT TO GENERATE THIS QUESTION-ANSWER PAIR]
</thinking>
<question>
[THE GENERATED QUESTION HERE]
</question>
<answer>
[THE GENERATED ANSWER HERE]
</answer>"""


def render_qa_prompt(entity_infos: str) -> str:
    return QA_PROMPT.format(entity_infos=entity_infos)


PRUNE_PROMPT = """Rewrite the question below to blur precise identifiers while keeping it solvable.

Replace exact dates with ranges (e.g. "the late 2000s"), replace specific numbers with relative terms (e.g. "a handful of", "more than a dozen"), and remove unique superlatives ("the first", "the largest"). Do not add new facts, do not remove the clues that make the question answerable, and do not change what is being asked.

The answer must remain exactly the same.

<question>
{question}
</question>
<answer>
{answer}
</answer>

Output the rewritten pair in the same format:
<question>
[REWRITTEN QUESTION]
</question>
<answer>
[THE SAME ANSWER, UNCHANGED]
</answer>"""


def render_prune_prompt(question: str, answer: str) -> str:
    return PRUNE_PROMPT.format(question=question, answer=answer)


QA_VALIDATION_PROMPT = """You review synthesized research questions. A good question centers on obscure entities, requires iterative web search across several hops, stays vague rather than using precise lookup keys, and names its target entity as the answer.

Question:
{question}

Answer:
{answer}

Reply with exactly one word: ACCEPT or REJECT."""


def render_qa_validation_prompt(question: str, answer: str) -> str:
    return QA_VALIDATION_PROMPT.format(question=question, answer=answer)


AGENT_SYSTEM_PROMPT = """You are a deep research agent. You answer questions by reasoning step by step and using tools to gather evidence from the web.

In every reply, first write your reasoning inside <think> </think> tags. Then either call exactly one tool by writing a JSON object with "name" and "arguments" inside <tool_call> </tool_call> tags, or give your final answer inside <answer> </answer> tags.

Tool results will be returned to you inside <tool_response> </tool_response> tags.

Available tools:
{tool_schemas}

Never fabricate tool results. Keep searching until you can support your answer with evidence, then answer concisely."""


def render_agent_system_prompt(tool_schemas: dict) -> str:
    return AGENT_SYSTEM_PROMPT.format(tool_schemas=json.dumps(tool_schemas, ensure_ascii=False, indent=2))


SUMMARY_PROMPT = """Summarize the content below with respect to the query. Report only information relevant to the query, keeping exact figures, names, and units intact. If the page contains nothing relevant, say so.

Query: {query}

Content:
{content}"""


def render_summary_prompt(query: str, content: str, max_chars: int = 8000) -> str:
    return SUMMARY_PROMPT.format(query=query, content=content[:max_chars])


CORRECTNESS_PROMPT = """You judge whether a model's final answer is semantically equivalent to the ground truth for the given question. Allow flexibility in formatting, capitalization, word order, and minor linguistic variations; the meaning must match.

Question: {question}

Ground Truth: {gold}

Model Answer: {answer}

Reply with a JSON object exactly of the form {{"equivalent": "yes"}} or {{"equivalent": "no"}}."""


def render_correctness_prompt(question: str, gold: str, answer: str) -> str:
    return CORRECTNESS_PROMPT.format(question=question, gold=gold, answer=answer)


QUALITY_PROMPT = """You are a professional data quality evaluation expert. Please carefully analyze the following SFT training data and determine whether its quality is acceptable.

Data Content:

Question: {question}

Ground Truth Answer: {answer}

Model Response: {model_response}

Conversation Trajectory:

{trajectory_text}

Evaluation Criteria:
Please evaluate the data quality according to the following criteria. If any of the issues below are present, the data should be marked as "Unqualified":
1. Tool Call Hallucination: The model claims to have successfully invoked a tool, but the tool did not actually return any useful content.
2. Keyword-Result Mismatch: The search keywords do not align with the actual content returned by the tool.
3. Fabricated Search Results: The model claims to have retrieved search results when no such results were actually obtained.
4. Process Fabrication: The model presents a seemingly correct solution process, but the underlying reasoning is incorrect.
5. Cognitive Inconsistency: The model forms an incorrect initial assumption, encounters contradictory information during search, extracts the correct answer, but fails to update or revise its erroneous belief.
6. Logical Errors: There are clear logical flaws in the reasoning process.

Evaluation Instructions:
- Carefully analyze each evaluation criterion.
- If any quality issues are identified, clearly explain the specific problems.
- If the data quality is acceptable, explain why it passes the evaluation.
- If the ground truth answer is empty, you do not need to evaluate whether the model response matches the ground truth; only consider the other evaluation criteria.

Output Format:

Please strictly follow the JSON format below:
```json
{{
    "quality_score": "Qualified" or "Unqualified",
    "reason": "A detailed explanation justifying why the data passes or fails the evaluation",
    "issues": ["Issue 1", "Issue 2", ...]
}}
```"""


def render_quality_prompt(question: str, answer: str, model_response: str, trajectory_text: str) -> str:
    return QUALITY_PROMPT.format(
        question=question,
        answer=answer,
        model_response=model_response,
        trajectory_text=trajectory_text,
    )


SCORING_PROMPT = """Score the trajectory below on three dimensions, each from 0 to 10:
- logical_consistency: the reasoning is coherent and each step follows from the evidence.
- factual_correctness: claims match the tool results and the final answer is supported.
- overall_quality: the trajectory is an efficient, well-structured solution to the task.

Task: {question}

Trajectory:
{trajectory_text}

Reply with a JSON object exactly of the form:
{{"logical_consistency": <number>, "factual_correctness": <number>, "overall_quality": <number>}}"""


def render_scoring_prompt(question: str, trajectory_text: str) -> str:
    return SCORING_PROMPT.format(question=question, trajectory_text=trajectory_text)


def serialize_graph_for_prompt(graph) -> str:
    """Entity graph as the canonical JSON block embedded in QA prompts."""
    payload = {
        "root": graph.root,
        "depth": graph.depth,
        "records": {
            name: {
                "entity_self": rec.entity_self,
                "entity_relations": rec.entity_relations,
            }
            for name, rec in sorted(graph.records.items())
        },
    }
    return canonical_json(payload)
