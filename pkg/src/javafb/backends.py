"""Model backends behind the uniform completion surface.

The stub backend answers from a deterministic template or canned table and is
what tests and the service contract suite run against; the desk-scale backend
samples from a TinyCodeLM checkpoint; the HTTP backend fronts an external
completion endpoint.
"""

from __future__ import annotations

from typing import Callable

import torch

from .adapters.tiny_model import CharTokenizer, TinyCodeLM
from .generation import GenerationParams


def _truncate_words(text: str, max_tokens: int) -> str:
    words = text.split()
    if len(words) <= max_tokens:
        return text
    return " ".join(words[:max_tokens])


class StubBackend:
    """Deterministic completions for tests and offline smoke runs.

    Answers from an exact-match table when provided, otherwise via a reply
    function of the prompt. Counts whitespace tokens.
    """

    def __init__(
        self,
        canned: dict[str, str] | None = None,
        reply: Callable[[str, GenerationParams], str] | None = None,
        context_length: int = 16_384,
        fail_times: int = 0,
    ):
        self.canned = canned or {}
        self.reply = reply
        self.context_length = context_length
        self.fail_times = fail_times
        self.calls: list[tuple[str, GenerationParams]] = []

    def count_tokens(self, text: str) -> int:
        return len(text.split())

    def complete(self, prompt: str, params: GenerationParams) -> str:
        self.calls.append((prompt, params))
        if self.fail_times > 0:
            self.fail_times -= 1
            raise RuntimeError("stub backend transient failure")
        if prompt in self.canned:
            text = self.canned[prompt]
        elif self.reply is not None:
            text = self.reply(prompt, params)
        else:
            text = "KM: stubbed mistake description. KH: stubbed fix guidance."
        return _truncate_words(text, params.max_tokens)


class TinyModelBackend:
    """Sampling backend over the desk-scale character-level model."""

    def __init__(self, model: TinyCodeLM, tokenizer: CharTokenizer):
        self.model = model
        self.tokenizer = tokenizer
        self.context_length = model.context_length

    def count_tokens(self, text: str) -> int:
        return len(self.tokenizer.encode(text))

    def complete(self, prompt: str, params: GenerationParams) -> str:
        ids = self.tokenizer.encode(prompt, add_bos=True)
        budget = self.context_length - 1
        if len(ids) > budget:
            ids = ids[-budget:]
        generator = None
        if params.seed is not None:
            generator = torch.Generator()
            generator.manual_seed(params.seed)
        out = self.model.sample(
            ids,
            max_new_tokens=params.max_tokens,
            temperature=params.temperature,
            top_p=params.top_p,
            generator=generator,
        )
        return self.tokenizer.decode(out)


class HttpCompletionBackend:
    """Plain completion endpoint client (JSON in, JSON out)."""

    def __init__(
        self,
        endpoint: str,
        model_id: str,
        timeout: float = 120.0,
        api_key: str | None = None,
        context_length: int = 16_384,
        transport: Callable[[dict], dict] | None = None,
    ):
        self.endpoint = endpoint
        self.model_id = model_id
        self.timeout = timeout
        self.api_key = api_key
        self.context_length = context_length
        self._transport = transport or self._post

    def count_tokens(self, text: str) -> int:
        # Remote tokenizer is unknown; whitespace tokens are the conservative proxy.
        return len(text.split())

    def request_payload(self, prompt: str, params: GenerationParams) -> dict:
        return {
            "model": self.model_id,
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            **({"seed": params.seed} if params.seed is not None else {}),
        }

    def _post(self, payload: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        resp = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def complete(self, prompt: str, params: GenerationParams) -> str:
        data = self._transport(self.request_payload(prompt, params))
        if "choices" in data:
            choice = data["choices"][0]
            return choice.get("text") or choice.get("message", {}).get("content", "")
        return data["completion"]
