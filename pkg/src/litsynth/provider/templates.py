"""Prompt templates and the output shapes each one demands.

Template bodies use ``str.format`` placeholder syntax; doubled braces are
escapes that render as single literal braces. Every template carries a JSON
Schema describing the structured output it requires, which the provider
enforces (with automatic repair re-requests) in ``complete_structured``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from string import Formatter
from typing import Mapping

from ..errors import TemplateError


def _placeholders(body: str) -> frozenset[str]:
    names = set()
    for _, field_name, _, _ in Formatter().parse(body):
        if field_name:
            names.add(field_name)
    return frozenset(names)


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    expected_shape: Mapping[str, object]
    placeholders: frozenset[str] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "placeholders", _placeholders(self.body))


def render_template(template: PromptTemplate, variables: Mapping[str, object]) -> str:
    """Substitute all placeholders; raise naming any that are missing."""
    missing = sorted(template.placeholders - set(variables))
    if missing:
        raise TemplateError(
            f"missing template variable(s): {', '.join(missing)}", placeholder=missing[0]
        )
    values = {key: str(value) for key, value in variables.items()}
    try:
        return template.body.format(**values)
    except (KeyError, IndexError, ValueError) as exc:
        raise TemplateError(f"template {template.template_id!r} failed to render: {exc}") from exc


FACET_CANDIDATES_SHAPE = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "name": {"type": "string"},
            "description": {"type": "string"},
        },
        "required": ["name", "description"],
    },
}

MERGED_FACETS_SHAPE = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "name": {"type": "string"},
            "type": {"enum": ["text", "number", "boolean"]},
            "description": {"type": "string"},
        },
        "required": ["name", "type", "description"],
    },
}

EXTRACTED_VALUES_SHAPE = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "facet_id": {"type": ["integer", "string"]},
            "value": {"type": ["string", "null"]},
        },
        "required": ["facet_id", "value"],
    },
}

SNIPPET_MAP_SHAPE = {
    "type": "object",
    "additionalProperties": {"type": ["string", "null"]},
}

NESTED_CATEGORIES_SHAPE = {
    "type": "object",
    "minProperties": 1,
}

SUMMARY_BLOCKS_SHAPE = {
    "type": "object",
    "properties": {
        "summary_blocks": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "header": {"type": "string"},
                    "content": {"type": "string"},
                },
                "required": ["header", "content"],
            },
        }
    },
    "required": ["summary_blocks"],
}


FACET_INDUCTION = PromptTemplate(
    template_id="facet-induction",
    expected_shape=FACET_CANDIDATES_SHAPE,
    body="""A user wants to write a literature review for a set of related research papers. The following is a list of contexts from the papers. Your task is to identify facets whose values would likely allow a user to meaningfully compare and contrast across the papers.

Context: {context}

Generate facets that can be used to compare and contrast different aspects of information across the set of papers. Each facet should be a short phrase that can be used to compare information across the papers. For each facet, generate a description in the form of a short question that the facet would help answer. Generate at most {max_facets} facets. The challenge is to find specific facets that are relevant to this set of papers, in addition to generally useful facets for comparing research papers, such as 'Study design' or 'Research questions'.

Keep each facet focused on a SINGLE concept. Do not combine multiple concepts into one facet. For example, instead of "Evaluation Metrics and Results", create separate facets for "Evaluation Metrics" and "Study Results". Instead of "Implications and Future Work", create separate facets for "Research Implications" and "Future Work Directions".

For example, specific facets such as 'User study methodology', 'Number of participants', or 'System design goals' could be relevant for helping a user explore a set of HCI papers. Or with a set of papers on machine learning for information retrieval, potentially informative facets may be 'Number of parameters' or 'Retrieval methods'.

Here are some other examples of facets: Intervention effects, Study design, Study objectives, Theoretical framework, Research questions, Dataset characteristics, Study count, Study duration, Statistical techniques, Algorithm type, Software tools, Participant demographics, Policy recommendations, Design goals, Research limitations, Ethical considerations, etc.

Return a single valid JSON list (without code block) containing objects with the name and description of each facet. Do not return any other text.

Example output:
[
    {{ "name": "<facet 1>", "description": "<description of facet 1>" }},
    {{ "name": "<facet 2>", "description": "<description of facet 2>" }},
    {{ "name": "<facet 3>", "description": "<description of facet 3>" }},
    ...
]""",
)


FACET_MERGE = PromptTemplate(
    template_id="facet-merge",
    expected_shape=MERGED_FACETS_SHAPE,
    body="""The following list contains facets used to analyze research papers. Your task is to:
* Identify and consolidate truly duplicate facets (exact matches or synonyms)
* Keep distinct concepts separate, even if they appear related
* Select up to {max_facets} most important facets for understanding research papers

Guidelines:
* Do not combine distinct concepts with "and" (e.g., keep "Data Collection" and "Data Analysis" as separate facets)
* Only consolidate facets that mean exactly the same thing (e.g., "User Study" and "User Evaluation" could become just "User Study")
* Each facet should represent a single clear concept
* Preserve specificity where it adds value

The following is the list of facets to process:
{facets}

Return your output as a JSON array (without code block). Each facet should have:
* 'name': A concise label for the facet
* 'type': The data type (text, number, or boolean)
* 'description': A clear, focused description of what the facet captures

Example output:
[
{{ "name": "Research Objective", "type": "text", "description": "The primary goal or aim of the research" }},
{{ "name": "Methodology", "type": "text", "description": "The research method used to conduct the study" }}
]""",
)


VALUE_EXTRACTION = PromptTemplate(
    template_id="value-extraction",
    expected_shape=EXTRACTED_VALUES_SHAPE,
    body="""Use the provided paper context to retrieve information relevant to the specified list of facets. Each facet has a number id, a "Name", and a "Description" (optional). When provided, the "Description" key provides context (e.g., additional instructions or example output formats) for the information expected to be extracted for that facet.

* For each facet, generate a paragraph of detailed, accurate, and relevant information (typically between 3 to 5 sentences) by synthesizing relevant information from the provided paper context.
* Use a passive or third-person voice when summarizing information for an facet. For instance, avoid using phrases such as "we", "our approach", etc.
* If there is no relevant information for an facet in the provided context, return null for that facet value. Do not return any other text and do not make up an answer unsupported by the paper context.

Your output should contain a list of objects. Each object should have:
* 'facet_id': The id of the facet (as provided in the input).
* 'value': The information extracted for that facet, or null if no relevant information is found.

The output should contain exactly as many objects as the facets provided in the input.

Paper Context:
{context}

Facets:
{facets}

Output format:
Do not include any explanations, only provide a valid JSON response (without code block). For example, if you are provided with 3 facets, the output should be in the following format:
[
    {{ "facet_id": 1, "value": "<information for facet 1>" }},
    {{ "facet_id": 2, "value": "<information for facet 2>" }},
    {{ "facet_id": 3, "value": null }}
]""",
)


VALUE_DISTILLATION = PromptTemplate(
    template_id="value-distillation",
    expected_shape=SNIPPET_MAP_SHAPE,
    body="""Summarize information related to the following facet of research papers: {facet} (description (optional): {facet_description}) from research paper excerpts. For each excerpt, return exactly one sentence of clear and concise information about this specific facet. The goal is for your summary to allow a user to more quickly understand {facet}, e.g., during an initial exploratory phase of literature review, and return to the original, longer excerpt later if they desire additional detail.

Guidelines for your summaries:
* Focus only on information directly related to {facet}
* Keep each summary to a maximum of 20 words
* Use present tense and consistent formatting across all summaries
* If an excerpt contains no relevant information about {facet}, return an empty string
* Include key statistics and metrics when present
* Avoid subjective interpretations or evaluations

Your output must be a valid JSON object (without code block) where:
* Keys are the original paperIds
* Values are either null or a string containing a single sentence summary
* Maintain the exact paperId format and order as provided in the input, making sure each paper in the input has a corresponding output value (null or string)

Example input for the facet "participant demographics":
{{
  "CorpusId:123": "The user study demographics consist of 32 trained undergraduates who have completed at least one course in computer science or statistics. A total of over 2100 responses were collected from these participants, ensuring a diverse pool of users with relevant academic backgrounds to assess the effectiveness of explanation methods.",
  "CorpusId:456": "The user study demographics include 72 participants, with a gender distribution of 19 women and 2 who declined to state their gender. Participants' ages range from 18 to over 50, with a majority falling between 30 and 39 years old. The study does not involve expert participants, but efforts were made to enhance their domain knowledge through training tasks.",
  "CorpusId:300": null
}}

Example output:
{{
  "CorpusId:123": "32 trained undergraduates with computer science or statistics background provided over 2100 responses.",
  "CorpusId:456": "72 participants including 19 women, aged mostly 30-39, with no expertise but received training tasks.",
  "CorpusId:300": null
}}

Now, summarize the following excerpts, returning your response as a valid JSON object (without code block):
{excerpts}""",
)


TAXONOMY_GENERATION = PromptTemplate(
    template_id="taxonomy-generation",
    expected_shape=NESTED_CATEGORIES_SHAPE,
    body="""A researcher is analyzing a collection of papers to write a literature review. They have extracted snippets of relevant information related to the following facet:
{facet_name_and_description}

Your task is to organize these snippets into a hierarchical structure that provides clear, specific, and informative categorization. The goal is to create a nested organization that logically groups similar evidence across papers together.

Hierarchy Requirements:
* Construct a hierarchy with a maximum depth of 5 levels.
* Let the natural structure of the snippets determine how many levels are appropriate.
* The final level must contain only arrays of snippet indices (0-based indexing).
* The top level must have no more than {max_n_categories} categories.
* Aim to have categories that are not too small (e.g., 1 or 2 snippets) or too large (e.g., 20+ snippets). The goal is to have snippets within each category be meaningful when examined together.
* Use subcategories when snippets cover diverse aspects that deserve separation.
* Avoid vague or generic category names.
* Ensure that ALL snippets are included somewhere in your hierarchy.
* A snippet can belong to one or more categories (i.e., it may make sense for a snippet to be included in multiple relevant categories if it covers multiple topics).

Use "Miscellaneous" Categories Sparingly:
* Do not create a "Miscellaneous" category unless absolutely necessary.
Check for patterns before grouping snippets under a catch-all category.
Split "Miscellaneous" categories into subcategories when possible.
Keep them small—only use them for genuinely diverse snippets.

Input paper snippets:
{snippets}

Output format:
The output must be a valid JSON object (wihtout code block), where:
* Keys represent categories and subcategories.
* Values are either subcategories or arrays of snippet indices.
* Do not include additional keys (e.g., "indices", "description", "items").
* Do not include any explanation, preamble, or additional formatting.

Example:
If the input snippets were about "performance metrics", a good hierarchy could be:
{{
  "Model Performance": {{
    "Text Processing": {{
      "Classification": {{
        "Accuracy Metrics": [0, 3]
      }},
      "Named Entity Recognition": {{
        "Precision Metrics": [1]
      }},
      "Translation": {{
        "Error Analysis": [2]
      }}
    }}
  }},
  "System Efficiency": {{
    "Speed": {{
      "Response Time": [4, 6],
      "Processing Throughput": [7]
    }},
    "Resource Utilization": {{
      "Computational Resources": [5],
      "Memory Usage": [8],
      "GPU Performance": [9]
    }}
  }},
  "User Experience": {{
    "Satisfaction": [10, 12],
    "Reliability": [11, 13]
  }}
}}""",
)


SUMMARIZATION = PromptTemplate(
    template_id="summarization",
    expected_shape=SUMMARY_BLOCKS_SHAPE,
    body="""Transform the following taxonomy of organized information snippets from different research papers into a clear and concise summary that captures the key points related to the given facet. Your synthesis should be formatted as a valid JSON object with a single key "summary_blocks" containing an array of objects, each with "header" and "content" keys.

Facet:
{facet_name_and_description}

Taxonomy Structure and Paper Excerpts:
Excerpts are extracted from various research papers and provides information relevant to a more detailed aspect of the facet above:
{excerpts}

Papers to Highlight:
When provided, the following papers should be highlighted in your summary. Incorporate them smoothly:
{starred_papers}

Additional Instructions:
* Structure your response as a valid JSON dictionary with exactly one key "summary_blocks" containing an array of objects.
* Each object in the array should have two keys: "header" (corresponding to a top-level category from the taxonomy structure) and "content" (containing your synthesized text for that category).
* Headers should match the top-level structure provided in the taxonomy.
* Ensure all papers from the taxonomy are included in your summary across the different blocks.
* Your content should be primarily descriptive. Do not include introductory or concluding sentences. Do not generate statements that connect snippets in meaningless ways.
* Synthesize the key details into cohesive and insightful content blocks, covering as much of the provided information as possible.
* Use the provided hierarchical structure as a guide for organizing your summary blocks.
* Break your content into paragraphs when appropriate to improve readability.
* Prioritize the papers listed in the "Papers to highlight" section if any are listed, by ensuring they are incorporated into the summary. Make sure to incorporate them smoothly (e.g., by including more detail about those papers, but don't explicitly say phrases like "the highlighted papers examine..." or "the featured works on ...")
* Your entire summary across all blocks should be {length_constraint}.
* Remember that these snippets you are summarizing come from different papers. Avoid language like "This paper" or "This system", since the summary is synthesizing across multiple papers.

Citing Sources:
* Your summary MUST cite all unique papers in the extracted snippets at least once, to the extent possible.
* Your citations MUST use the exact paperId format provided in the extracted snippets. The paper id could be any string (e.g., "12345", "CorpusId:12345", "URL:12345", etc.), and you should cite using the exact and entire paper id.
* Place citations [[paperId]] immediately after specific words, phrases, or concepts they support - not just at the end of sentences. For example: "The study found increased levels of protein X [[paperId1]] and decreased levels of enzyme Y [[paperId2]] in the treatment group."
* When multiple sources support the same specific point, group those citations together like [[paperId1, paperId2, paperId3]].

Output format:
{{
  "summary_blocks": [
    {{
      "header": "First Top-Level Category",
      "content": "Your synthesized content with precise citations after specific terms [[paperId1]] or concepts [[paperId2]]. When listing multiple findings such as A [[paperId3]], B [[paperId4]], and C [[paperId5, paperId6]], citations should follow each item they support rather than appearing only at the end of sentences."
    }},
    {{
      "header": "Second Top-Level Category",
      "content": "More synthesized content with appropriate citations [[paperId7, paperId8]]."
    }}
  ]
}}""",
)


TEMPLATES: dict[str, PromptTemplate] = {
    t.template_id: t
    for t in (
        FACET_INDUCTION,
        FACET_MERGE,
        VALUE_EXTRACTION,
        VALUE_DISTILLATION,
        TAXONOMY_GENERATION,
        SUMMARIZATION,
    )
}
