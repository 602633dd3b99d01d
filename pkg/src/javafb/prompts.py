"""Prompt templates shared across dataset generation, training, and inference.

The bracketed INST sentinels wrap every instruct-format prompt; they are
defined once here and never re-typed elsewhere. The training wrapper and the
inference wrapper differ deliberately (short vs long KM/KH label spelling and
sentinel spacing) and are pinned byte-for-byte by golden tests.
"""

from __future__ import annotations

INST_OPEN = "[INST]"
INST_CLOSE = "[/INST]"

# Persona for the external triplet generator.
TRIPLET_SYSTEM_PROMPT = (
    "You are an expert programming tutor with strong knowledge of common "
    "student mistakes from programming education literature."
)

_BUG_TYPE_PLACEHOLDER = "{BUG_TYPE}"

TRIPLET_USER_TEMPLATE = (
    "Your task is to generate five buggy Java code snippets that illustrate "
    "the common mistakes made by students in introductory undergraduate "
    "programming courses (CS1 and CS2 levels) aligned with the bug type "
    "specified below. Bug type: {BUG_TYPE}\n"
    "For each code provide:\n"
    "** KM (Knowledge about mistakes) ** : Provide feedback that helps "
    "students understand their mistakes. If there are multiple mistakes, "
    "list them individually.\n"
    "** KH (Knowledge about how to proceed) ** : Provide guidance to the "
    "students on how to fix the mistakes. Do not provide the corrected code. "
    "Instead, please provide short, concise, and easily understandable "
    "explanations."
)

# Appended so generator output is machine-parseable; content above is the
# pedagogical contract, this is the wire format.
TRIPLET_FORMAT_DIRECTIVE = (
    "Format your answer as five blocks. Each block must contain the Java "
    "code inside a fenced code block (```java ... ```), followed by one line "
    'beginning with "KM:" and one line beginning with "KH:".'
)

TRAIN_INSTRUCTION = (
    "Generate detailed feedback in the format KM (Knowledge about Mistakes) "
    "and KH (Knowledge about how to proceed) for this Java code:"
)

EVAL_INSTRUCTION = (
    "Generate detailed feedback in the format Knowledge about Mistakes (KM) "
    "and Knowledge about how to proceed (KH) for this Java code:"
)

NO_EXTRA_EXAMPLES = "Do NOT create additional examples."


def triplet_generation_user_prompt(bug_description: str) -> str:
    """Substitute the bug description into the generation template (single pass)."""
    body = TRIPLET_USER_TEMPLATE.replace(_BUG_TYPE_PLACEHOLDER, bug_description, 1)
    return body + "\n" + TRIPLET_FORMAT_DIRECTIVE


def training_prompt(code: str) -> str:
    """Instruct-wrapped training prompt. Byte-identical for byte-identical code."""
    return f"{INST_OPEN} {TRAIN_INSTRUCTION}\n{code}\n{INST_CLOSE}"


def training_response(km: str, kh: str) -> str:
    return f"KM: {km} KH: {kh}"


def eval_prompt(code: str) -> str:
    """Inference prompt used by both the baseline and the fine-tuned model."""
    return f"{INST_OPEN}{EVAL_INSTRUCTION}\n{code}{INST_CLOSE}"


def few_shot_prompt(code: str, examples: list[tuple[str, str, str]]) -> str:
    """In-context prompt: instruction, no-extra-examples directive, 3 worked examples."""
    parts = [f"{INST_OPEN}{EVAL_INSTRUCTION}\n{code}.  {NO_EXTRA_EXAMPLES}"]
    for i, (ex_code, ex_km, ex_kh) in enumerate(examples, start=1):
        parts.append(f"Example {i}")
        parts.append(ex_code)
        parts.append(f"KM: {ex_km}")
        parts.append(f"KH: {ex_kh}")
    return "\n".join(parts) + f"\n{INST_CLOSE}"
