"""Abstraction documents and the proposers that produce them.

An abstraction document is a JSON object carrying the features (with formula
sources in the s-expression grammar), the QNP, and the abstract-to-ground
action map. Two proposer kinds implement the same interface: an HTTP chat
client that talks to a JSON chat-completion endpoint, and a file-backed one
that replays scripted documents for offline runs and tests.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field

import requests

from .features import FORMULA_GRAMMAR, Feature, FormulaError, parse_feature
from .pddl import GpDomain
from .pipeline import DebugReport, Stage
from .qnp import QnpAction, QnpProblem, QnpValidationError
from .refinement import Abstraction, RefinementError, RefinementMapping

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "ABSFORGE_API_KEY"


class DocError(Exception):
    pass


class NoJsonFound(DocError):
    pass


class SchemaViolation(DocError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class FormulaParseError(DocError):
    def __init__(self, feature: str, message: str):
        super().__init__(f"feature '{feature}': {message}")
        self.feature = feature


class ProposerError(Exception):
    pass


class AuthError(ProposerError):
    pass


class RequestTimeout(ProposerError):
    pass


class ProtocolError(ProposerError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class ScriptExhausted(ProposerError):
    pass


class EmptyTrainingSet(ProposerError):
    pass


@dataclass(frozen=True)
class AbstractionDoc:
    features: tuple[tuple[str, str, str], ...]  # (name, kind, definition source)
    bools: tuple[str, ...]
    nums: tuple[str, ...]
    actions: tuple[tuple[str, tuple[str, ...], tuple[str, ...], tuple[str, ...]], ...]
    init: tuple[str, ...]
    goal: tuple[str, ...]
    action_map: tuple[tuple[str, str], ...]  # (hl_name, ll_schema)

    def to_json_dict(self) -> dict:
        return {
            "features": [
                {"name": n, "kind": k, "definition": d} for n, k, d in self.features
            ],
            "qnp": {
                "bools": list(self.bools),
                "nums": list(self.nums),
                "actions": [
                    {
                        "name": name,
                        "pre": list(pre),
                        "bool_eff": list(be),
                        "num_eff": list(ne),
                    }
                    for name, pre, be, ne in self.actions
                ],
                "init": list(self.init),
                "goal": list(self.goal),
            },
            "action_map": [
                {"hl_name": hl, "ll_schema": ll} for hl, ll in self.action_map
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


ABSTRACTION_DOC_SCHEMA = """\
{
  "features": [{"name": <str>, "kind": "boolean" | "numerical", "definition": <formula or count source>}],
  "qnp": {
    "bools": [<boolean variable names>],
    "nums": [<numerical variable names>],
    "actions": [{"name": <str>, "pre": [<literal>], "bool_eff": [<literal>], "num_eff": ["inc(x)" | "dec(x)"]}],
    "init": [<literal>],
    "goal": [<literal>]
  },
  "action_map": [{"hl_name": <abstract action>, "ll_schema": <domain action schema>}]
}
Literals: p and !p for booleans, x>0 and x=0 for numerical variables.
Every numerical variable needs a "numerical" feature and every boolean
variable a "boolean" feature of the same name. Any action with dec(x) must
carry the precondition x>0."""


# ---------------------------------------------------------------------------
# document parsing and validation


_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_json_object(text: str) -> str:
    """First JSON object in a model reply, tolerating prose and code fences."""
    for block in _FENCE.findall(text):
        block = block.strip()
        if block.startswith("{"):
            text = block
            break
    start = text.find("{")
    while start != -1:
        depth = 0
        in_str = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_str:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_str = False
                continue
            if ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        json.loads(candidate)
                        return candidate
                    except json.JSONDecodeError:
                        break
        start = text.find("{", start + 1)
    raise NoJsonFound("no JSON object found in the reply")


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise SchemaViolation(path, message)


def _str_list(value, path: str) -> tuple[str, ...]:
    _require(isinstance(value, list), path, "expected a list")
    for i, x in enumerate(value):
        _require(isinstance(x, str), f"{path}[{i}]", "expected a string")
    return tuple(value)


def parse_abstraction_doc(text: str, dom: GpDomain | None = None) -> AbstractionDoc:
    """Extract and schema-check the first JSON object of a reply.

    With a domain the feature formulas are fully resolved (predicates and
    arities); without one only their syntax is checked.
    """
    raw = json.loads(extract_json_object(text))
    _require(isinstance(raw, dict), "$", "expected an object")
    _require("features" in raw, "$.features", "missing")
    _require("qnp" in raw, "$.qnp", "missing")
    _require("action_map" in raw, "$.action_map", "missing")

    feats: list[tuple[str, str, str]] = []
    _require(isinstance(raw["features"], list), "$.features", "expected a list")
    for i, f in enumerate(raw["features"]):
        path = f"$.features[{i}]"
        _require(isinstance(f, dict), path, "expected an object")
        for key in ("name", "kind", "definition"):
            _require(key in f and isinstance(f[key], str), f"{path}.{key}", "missing or not a string")
        _require(f["kind"] in ("boolean", "numerical"), f"{path}.kind", "must be boolean or numerical")
        feats.append((f["name"], f["kind"], f["definition"]))

    qnp = raw["qnp"]
    _require(isinstance(qnp, dict), "$.qnp", "expected an object")
    bools = _str_list(qnp.get("bools", []), "$.qnp.bools")
    nums = _str_list(qnp.get("nums", []), "$.qnp.nums")
    init = _str_list(qnp.get("init", []), "$.qnp.init")
    goal = _str_list(qnp.get("goal", []), "$.qnp.goal")
    actions: list[tuple[str, tuple[str, ...], tuple[str, ...], tuple[str, ...]]] = []
    _require(isinstance(qnp.get("actions"), list), "$.qnp.actions", "expected a list")
    for i, act in enumerate(qnp["actions"]):
        path = f"$.qnp.actions[{i}]"
        _require(isinstance(act, dict), path, "expected an object")
        _require(isinstance(act.get("name"), str), f"{path}.name", "missing or not a string")
        pre = _str_list(act.get("pre", []), f"{path}.pre")
        be = _str_list(act.get("bool_eff", []), f"{path}.bool_eff")
        ne = _str_list(act.get("num_eff", []), f"{path}.num_eff")
        try:
            QnpAction(act["name"], frozenset(pre), frozenset(be), frozenset(ne))
        except QnpValidationError as e:
            raise SchemaViolation(path, str(e)) from None
        actions.append((act["name"], pre, be, ne))

    maps: list[tuple[str, str]] = []
    _require(isinstance(raw["action_map"], list), "$.action_map", "expected a list")
    for i, m in enumerate(raw["action_map"]):
        path = f"$.action_map[{i}]"
        _require(isinstance(m, dict), path, "expected an object")
        for key in ("hl_name", "ll_schema"):
            _require(key in m and isinstance(m[key], str), f"{path}.{key}", "missing or not a string")
        maps.append((m["hl_name"], m["ll_schema"]))

    for name, kind, definition in feats:
        try:
            parse_feature(name, kind, definition, dom)
        except FormulaError as e:
            raise FormulaParseError(name, e.message) from None

    return AbstractionDoc(
        tuple(feats), bools, nums, tuple(actions), init, goal, tuple(maps)
    )


def validate_doc(doc: AbstractionDoc, dom: GpDomain) -> Abstraction | DebugReport:
    """Build the Abstraction, or a DOC_INVALID report naming every violation."""
    violations: list[str] = []
    features: list[Feature] = []
    for name, kind, definition in doc.features:
        try:
            features.append(parse_feature(name, kind, definition, dom))
        except FormulaError as e:
            violations.append(f"feature '{name}': {e.message}")

    for var in list(doc.bools) + list(doc.nums):
        if var not in {n for n, _, _ in doc.features}:
            violations.append(f"variable '{var}' has no feature definition")
    declared = set(doc.bools) | set(doc.nums)
    for name, kind, _ in doc.features:
        if name not in declared:
            violations.append(f"feature '{name}' matches no declared QNP variable")
        elif kind == "boolean" and name not in doc.bools:
            violations.append(f"feature '{name}' is boolean but '{name}' is numerical")
        elif kind == "numerical" and name not in doc.nums:
            violations.append(f"feature '{name}' is numerical but '{name}' is boolean")

    actions = []
    for name, pre, be, ne in doc.actions:
        try:
            actions.append(QnpAction(name, frozenset(pre), frozenset(be), frozenset(ne)))
        except QnpValidationError as e:
            violations.append(str(e))

    problem: QnpProblem | None = None
    if not violations:
        try:
            problem = QnpProblem(
                doc.bools, doc.nums, tuple(actions), frozenset(doc.init), frozenset(doc.goal)
            )
        except QnpValidationError as e:
            violations.append(str(e))

    schema_names = {a.name for a in dom.actions}
    hl_names = {name for name, _, _, _ in doc.actions}
    seen_hl: set[str] = set()
    for hl, ll in doc.action_map:
        if hl in seen_hl:
            violations.append(f"abstract action '{hl}' mapped more than once")
        seen_hl.add(hl)
        if hl not in hl_names:
            violations.append(f"action map names unknown abstract action '{hl}'")
        if ll not in schema_names:
            violations.append(f"action map points '{hl}' at unknown schema '{ll}'")

    if not violations and problem is not None:
        try:
            mapping = RefinementMapping(tuple(features), doc.action_map)
            return Abstraction(problem, mapping)
        except (RefinementError, QnpValidationError) as e:
            violations.append(str(e))

    if not violations:
        violations.append("document could not be assembled")
    return DebugReport(
        Stage.DOC_INVALID,
        "the abstraction document failed validation",
        {"violations": violations},
    )


# ---------------------------------------------------------------------------
# generation prompts


_FEATURE_PROMPT = """\
Input: planning domain (PDDL)
---
<<domain>>
---
Generate Boolean and numerical features for this domain according to the
following template:
- Boolean feature: p := exists x. phi(x), where phi(x) is a first-order
  formula over the domain's predicates.
- Numerical feature: n := count x. delta(x), where delta(x) is a first-order
  formula over the domain's predicates.
Output the Boolean feature set and the numerical feature set, one feature per
line as `name := definition`, writing each definition in this grammar:
<<grammar>>"""

_ABSTRACTION_PROMPT = """\
Input: planning domain (PDDL) and training instances
---
<<domain>>
---
<<instances>>
---
Generate a QNP abstraction for the instances based on the features as follows.
- Step 1: compute the abstraction of the initial states of the instances (init literals);
- Step 2: compute the abstraction of the goals of the instances (goal literals);
- Step 3: compute the abstract action set based on the domain's action schemata,
  and map every abstract action to the schema it refines to.
Output the QNP (variables, actions, init, goal) and the refinement mapping as a
single JSON document in exactly this schema:
<<schema>>
Formula grammar for feature definitions:
<<grammar>>"""


def render_feature_prompt(dom: GpDomain) -> str:
    return (
        _FEATURE_PROMPT.replace("<<domain>>", dom.source_text.strip())
        .replace("<<grammar>>", FORMULA_GRAMMAR)
    )


def render_abstraction_prompt(dom: GpDomain, instance_texts: list[str]) -> str:
    if not instance_texts:
        raise EmptyTrainingSet("abstraction prompt needs at least one training instance")
    return (
        _ABSTRACTION_PROMPT.replace("<<domain>>", dom.source_text.strip())
        .replace("<<instances>>", "\n---\n".join(t.strip() for t in instance_texts))
        .replace("<<schema>>", ABSTRACTION_DOC_SCHEMA)
        .replace("<<grammar>>", FORMULA_GRAMMAR)
    )


# ---------------------------------------------------------------------------
# chat transport


@dataclass
class ProposerConfig:
    kind: str = "file"  # 'llm' | 'file'
    endpoint: str = ""
    model: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout_seconds: float = 60.0
    max_retries: int = 3
    backoff_seconds: float = 1.0
    script_paths: tuple[str, ...] = ()
    max_prompt_tokens: int = 200_000

    def __post_init__(self):
        if self.kind not in ("llm", "file"):
            raise ValueError(f"unknown proposer kind '{self.kind}'")
        if self.kind == "llm" and (not self.endpoint or not self.model):
            raise ValueError("llm proposer requires endpoint and model")

    @staticmethod
    def from_json_dict(d: dict) -> "ProposerConfig":
        return ProposerConfig(
            kind=d.get("kind", "file"),
            endpoint=d.get("endpoint", ""),
            model=d.get("model", ""),
            api_key_env=d.get("api_key_env", DEFAULT_API_KEY_ENV),
            timeout_seconds=d.get("timeout_seconds", 60.0),
            max_retries=d.get("max_retries", 3),
            backoff_seconds=d.get("backoff_seconds", 1.0),
            script_paths=tuple(d.get("script_paths", [])),
            max_prompt_tokens=d.get("max_prompt_tokens", 200_000),
        )


@dataclass
class Conversation:
    messages: list[dict] = field(default_factory=list)

    def add(self, role: str, content: str) -> None:
        self.messages.append({"role": role, "content": content})

    def truncated(self, max_tokens: int) -> list[dict]:
        """Oldest-first truncation under a rough 4-chars-per-token estimate,
        always keeping the system message and the latest message."""

        def cost(msgs) -> int:
            return sum(len(m["content"]) for m in msgs) // 4

        msgs = list(self.messages)
        while cost(msgs) > max_tokens and len(msgs) > 2:
            for i, m in enumerate(msgs):
                if m["role"] != "system" and i < len(msgs) - 1:
                    del msgs[i]
                    break
            else:
                break
        return msgs


def llm_chat(cfg: ProposerConfig, conv: Conversation) -> str:
    """One chat-completion round trip; returns the assistant text.

    Retries transient failures (connection errors, timeouts, 429 and 5xx)
    with exponential backoff up to max_retries; a 401 is an AuthError and is
    never retried. The API key is read from the environment and never logged.
    """
    if cfg.kind != "llm":
        raise ProposerError("llm_chat requires an llm proposer config")
    api_key = os.environ.get(cfg.api_key_env, "")
    if not api_key:
        raise AuthError(f"no API key in environment variable {cfg.api_key_env}")
    body = {"model": cfg.model, "messages": conv.truncated(cfg.max_prompt_tokens)}
    headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
    last_error: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        if attempt:
            time.sleep(cfg.backoff_seconds * (2 ** (attempt - 1)))
        logger.info("chat request to %s (model=%s, attempt=%d)", cfg.endpoint, cfg.model, attempt + 1)
        try:
            resp = requests.post(
                cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout_seconds
            )
        except requests.Timeout as e:
            last_error = RequestTimeout(str(e))
            continue
        except requests.ConnectionError as e:
            last_error = ProposerError(f"connection error: {e}")
            continue
        if resp.status_code == 401:
            raise AuthError("endpoint rejected the API key (401)")
        if resp.status_code == 429 or resp.status_code >= 500:
            last_error = ProtocolError(resp.status_code, resp.text)
            continue
        if resp.status_code != 200:
            raise ProtocolError(resp.status_code, resp.text)
        try:
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise ProtocolError(resp.status_code, f"malformed response body: {e}") from None
    if isinstance(last_error, RequestTimeout):
        raise last_error
    raise last_error if last_error else ProposerError("no attempts made")


# ---------------------------------------------------------------------------
# proposers


_SYSTEM_PREAMBLE = (
    "You design QNP abstractions for generalized planning problems. Answer "
    "with a single JSON abstraction document when asked for an abstraction."
)


def scripted_doc(paths: tuple[str, ...], index: int) -> str:
    """The index-th scripted document text; raises ScriptExhausted past the end."""
    if index >= len(paths):
        raise ScriptExhausted(f"script has {len(paths)} documents, call {index} requested")
    with open(paths[index], "r", encoding="utf-8") as fh:
        return fh.read()


class FileProposer:
    """Replays scripted abstraction documents; call i returns document i."""

    def __init__(self, cfg: ProposerConfig):
        self.cfg = cfg
        self.conversation = Conversation()
        self.conversation.add("system", _SYSTEM_PREAMBLE)
        self.calls = 0

    def _next(self) -> AbstractionDoc:
        text = scripted_doc(self.cfg.script_paths, self.calls)
        self.calls += 1
        self.conversation.add("assistant", text)
        return parse_abstraction_doc(text)

    def propose_initial(self, dom: GpDomain, instance_texts: list[str]) -> AbstractionDoc:
        self.conversation.add("user", render_feature_prompt(dom))
        self.conversation.add("user", render_abstraction_prompt(dom, instance_texts))
        return self._next()

    def propose_fix(self, prompt: str) -> AbstractionDoc:
        self.conversation.add("user", prompt)
        return self._next()


class LlmProposer:
    """Two-call initial protocol (features first, then the abstraction), then
    one fix call per feedback prompt; the whole conversation is resent each
    time, truncated oldest-first under the configured token budget."""

    def __init__(self, cfg: ProposerConfig):
        self.cfg = cfg
        self.conversation = Conversation()
        self.conversation.add("system", _SYSTEM_PREAMBLE)
        self._dom: GpDomain | None = None

    def propose_initial(self, dom: GpDomain, instance_texts: list[str]) -> AbstractionDoc:
        self._dom = dom
        self.conversation.add("user", render_feature_prompt(dom))
        features_reply = llm_chat(self.cfg, self.conversation)
        self.conversation.add("assistant", features_reply)
        self.conversation.add("user", render_abstraction_prompt(dom, instance_texts))
        reply = llm_chat(self.cfg, self.conversation)
        self.conversation.add("assistant", reply)
        return parse_abstraction_doc(reply, dom)

    def propose_fix(self, prompt: str) -> AbstractionDoc:
        self.conversation.add("user", prompt)
        reply = llm_chat(self.cfg, self.conversation)
        self.conversation.add("assistant", reply)
        return parse_abstraction_doc(reply, self._dom)


def make_proposer(cfg: ProposerConfig):
    if cfg.kind == "file":
        return FileProposer(cfg)
    return LlmProposer(cfg)
