"""Optional external text-completion backend.

Every failure mode becomes an AttemptOutcome state so no row is ever lost.
The wire format is a single JSON POST; the reply may carry the text either as
``text`` or OpenAI-style ``choices[0].text`` / ``choices[0].message.content``.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Mapping, Sequence

import httpx

from cbea.candidates import AttemptOutcome, BackendConfig, ControlAct, ParseFailure, outcome_for_act, parse_commitment
from cbea.text import whitespace_tokens

log = logging.getLogger(__name__)


def _reply_text(body: Any) -> str | None:
    if not isinstance(body, Mapping):
        return None
    if isinstance(body.get("text"), str):
        return body["text"]
    choices = body.get("choices")
    if isinstance(choices, list) and choices and isinstance(choices[0], Mapping):
        c = choices[0]
        if isinstance(c.get("text"), str):
            return c["text"]
        msg = c.get("message")
        if isinstance(msg, Mapping) and isinstance(msg.get("content"), str):
            return msg["content"]
    return None


def _usage(body: Mapping[str, Any], prompt: str, text: str) -> tuple[int, int]:
    u = body.get("usage") if isinstance(body, Mapping) else None
    if isinstance(u, Mapping):
        i = u.get("input_tokens", u.get("prompt_tokens"))
        o = u.get("output_tokens", u.get("completion_tokens"))
        if isinstance(i, int) and isinstance(o, int):
            return i, o
    return whitespace_tokens(prompt), whitespace_tokens(text)


def make_client(cfg: BackendConfig, transport: httpx.BaseTransport | None = None) -> httpx.Client:
    headers = {}
    key = os.environ.get(cfg.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return httpx.Client(timeout=cfg.timeout_seconds, headers=headers, transport=transport)


def generate_candidates_backend(
    prompt: str,
    cfg: BackendConfig,
    client: httpx.Client | None = None,
) -> AttemptOutcome:
    """One attempt with up to ``cfg.parse_retries`` re-asks on malformed output."""
    own = client is None
    client = client or make_client(cfg)
    payload = {
        "model": cfg.model_id,
        "prompt": prompt,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }
    last_text, last_reason = "", ""
    tokens_in = tokens_out = 0
    try:
        for attempt in range(cfg.parse_retries + 1):
            try:
                resp = client.post(cfg.endpoint, json=payload)
            except httpx.TimeoutException as exc:
                return AttemptOutcome("timeout", raw_text=last_text, retries=attempt, reason=f"timeout: {exc}")
            except httpx.RemoteProtocolError as exc:
                return AttemptOutcome("partial_output", raw_text=last_text, retries=attempt, reason=f"stream cut: {exc}")
            except httpx.HTTPError as exc:
                return AttemptOutcome("no_output", raw_text=last_text, retries=attempt, reason=f"transport: {exc}")
            if resp.status_code >= 400:
                return AttemptOutcome("no_output", retries=attempt, reason=f"http {resp.status_code}")
            try:
                body = resp.json()
            except ValueError:
                return AttemptOutcome("no_output", raw_text=resp.text, retries=attempt, reason="non-json body")
            text = _reply_text(body)
            if text is None:
                return AttemptOutcome("no_output", retries=attempt, reason="reply carries no text")
            i, o = _usage(body, prompt, text)
            tokens_in += i
            tokens_out += o
            if not text.strip():
                return AttemptOutcome("blank_output", raw_text=text, input_tokens=tokens_in, output_tokens=tokens_out, retries=attempt, reason="blank")
            try:
                a = parse_commitment(text)
            except ParseFailure as exc:
                last_text, last_reason = text, exc.reason
                log.debug("parse failure on attempt %d: %s", attempt, exc.reason)
                continue
            return outcome_for_act(
                ControlAct.from_commitment(a), raw_text=text, input_tokens=tokens_in, output_tokens=tokens_out, retries=attempt
            )
        return AttemptOutcome(
            "parse_failure", raw_text=last_text, input_tokens=tokens_in, output_tokens=tokens_out,
            retries=cfg.parse_retries, reason=last_reason,
        )
    finally:
        if own:
            client.close()


def run_prompts(
    prompts: Sequence[str],
    cfg: BackendConfig,
    client_factory: Callable[[], httpx.Client] | None = None,
) -> list[AttemptOutcome]:
    """Fan prompts out with at most ``cfg.max_in_flight`` concurrent requests; order preserved."""
    factory = client_factory or (lambda: make_client(cfg))
    with factory() as client, ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
        return list(pool.map(lambda p: generate_candidates_backend(p, cfg, client), prompts))
