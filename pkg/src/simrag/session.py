"""Branching chat sessions and budget-bounded prompt assembly.

A session is a tree of messages: any node can become the active leaf again
(branching), and only the root-to-leaf path feeds the LLM. Assembly packs
system prompt, category-ordered context blocks, windowed history and the
user prompt into a token budget, shedding history before neighbor blocks
and neighbor blocks before direct hits: stale history merely confuses the
model, missing direct context makes it hallucinate.
"""

from __future__ import annotations

import enum
import json
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from .corpus import CorpusStore, SourceCategory
from .errors import BudgetImpossibleError, InvalidConfigError, UnknownNodeError
from .retrieval import Origin, RetrievalResult

ROOT_NODE_ID = "root"

DEFAULT_MAX_CONTEXT_TOKENS = 8192
DEFAULT_HISTORY_WINDOW = 20
DEFAULT_RESERVE_FOR_RESPONSE = 1024

CONTEXT_HEADER_PREFIX = "[context:"

# Context blocks are emitted in this category order; documentation leads
# because complete documentation sections are the first thing a tailored
# prompt needs.
CATEGORY_BLOCK_ORDER = [
    SourceCategory.DOCUMENTATION,
    SourceCategory.API_REFERENCE,
    SourceCategory.INPUT_EXAMPLE,
    SourceCategory.PROJECT_REPORT,
    SourceCategory.DOMAIN_LITERATURE,
]

_FOCUS_SEPARATOR = "---focus---"


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"
    VALIDATOR_FEEDBACK = "validator_feedback"


@dataclass
class ChatMessage:
    id: str
    role: Role
    content: str
    citations: list[dict] = field(default_factory=list)
    created_at: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "role": self.role.value,
            "content": self.content,
            "citations": self.citations,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChatMessage":
        return cls(
            id=data["id"],
            role=Role(data["role"]),
            content=data["content"],
            citations=data.get("citations", []),
            created_at=data.get("created_at", ""),
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _new_node_id() -> str:
    return uuid.uuid4().hex[:12]


@dataclass
class SessionNode:
    message: ChatMessage
    parent: str | None


class SessionTree:
    """Acyclic message tree with a movable active leaf.

    The root is always a system preamble node; user/assistant messages
    attach under the active leaf. Branching moves the leaf without deleting
    anything.
    """

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.nodes: dict[str, SessionNode] = {}
        self.active_leaf = ROOT_NODE_ID

    @classmethod
    def new(cls, session_id: str | None = None, system_text: str = "") -> "SessionTree":
        tree = cls(session_id or uuid.uuid4().hex[:12])
        tree.nodes[ROOT_NODE_ID] = SessionNode(
            message=ChatMessage(
                id=ROOT_NODE_ID, role=Role.SYSTEM, content=system_text, created_at=_now()
            ),
            parent=None,
        )
        return tree

    def append(
        self,
        role: Role,
        content: str,
        citations: list[dict] | None = None,
    ) -> str:
        """Attach a message under the active leaf; returns its node id."""
        if role is Role.SYSTEM:
            raise InvalidConfigError("system messages exist only as the root preamble")
        node_id = _new_node_id()
        while node_id in self.nodes:
            node_id = _new_node_id()
        self.nodes[node_id] = SessionNode(
            message=ChatMessage(
                id=node_id,
                role=role,
                content=content,
                citations=citations or [],
                created_at=_now(),
            ),
            parent=self.active_leaf,
        )
        self.active_leaf = node_id
        return node_id

    def branch(self, node_id: str) -> None:
        """Move the active leaf; later appends create a sibling branch."""
        if node_id not in self.nodes:
            raise UnknownNodeError(f"node {node_id} not in session {self.session_id}")
        self.active_leaf = node_id

    def path_to(self, node_id: str) -> list[ChatMessage]:
        """Messages from root to ``node_id`` inclusive."""
        if node_id not in self.nodes:
            raise UnknownNodeError(f"node {node_id} not in session {self.session_id}")
        path = []
        cursor: str | None = node_id
        while cursor is not None:
            node = self.nodes[cursor]
            path.append(node.message)
            cursor = node.parent
        path.reverse()
        return path

    def active_history(self, window: int) -> list[ChatMessage]:
        """Last ``window`` non-system messages on the active path, oldest first."""
        messages = [m for m in self.path_to(self.active_leaf) if m.role is not Role.SYSTEM]
        return messages[-window:] if window > 0 else []

    def leaves(self) -> list[str]:
        parents = {node.parent for node in self.nodes.values() if node.parent}
        return [node_id for node_id in self.nodes if node_id not in parents]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "active_leaf": self.active_leaf,
            "nodes": {
                node_id: {"parent": node.parent, "message": node.message.to_dict()}
                for node_id, node in self.nodes.items()
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionTree":
        tree = cls(data["session_id"])
        tree.active_leaf = data["active_leaf"]
        for node_id, node in data["nodes"].items():
            tree.nodes[node_id] = SessionNode(
                message=ChatMessage.from_dict(node["message"]), parent=node["parent"]
            )
        if tree.active_leaf not in tree.nodes:
            raise UnknownNodeError(f"active leaf {tree.active_leaf} missing from nodes")
        return tree

    def copy(self) -> "SessionTree":
        return SessionTree.from_dict(self.to_dict())

    def save(self, sessions_dir: str | Path) -> Path:
        directory = Path(sessions_dir)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.session_id}.json"
        path.write_text(
            json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        return path

    @classmethod
    def load(cls, sessions_dir: str | Path, session_id: str) -> "SessionTree":
        path = Path(sessions_dir) / f"{session_id}.json"
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


@dataclass
class BudgetConfig:
    max_context_tokens: int = DEFAULT_MAX_CONTEXT_TOKENS
    history_window: int = DEFAULT_HISTORY_WINDOW
    reserve_for_response: int = DEFAULT_RESERVE_FOR_RESPONSE

    def __post_init__(self) -> None:
        if self.max_context_tokens < 1 or self.history_window < 1:
            raise InvalidConfigError("max_context_tokens and history_window must be positive")
        if not 0 <= self.reserve_for_response < self.max_context_tokens:
            raise InvalidConfigError("reserve_for_response must be below max_context_tokens")

    @property
    def prompt_budget(self) -> int:
        return self.max_context_tokens - self.reserve_for_response


def estimate_tokens(text: str) -> int:
    """ceil(len/4): a conservative, provider-agnostic heuristic."""
    return (len(text) + 3) // 4


def default_system_template() -> str:
    return (
        resources.files("simrag").joinpath("templates/system_prompt.txt").read_text("utf-8")
    )


def build_system_prompt(
    software_name: str, focus: bool, template: str | None = None
) -> str:
    """Base assistant preamble, plus the focus/knowledge-limitation/
    uncertainty clauses when ``focus`` is set.

    The template resource holds both parts separated by a ``---focus---``
    line and may be overridden via the ``system_prompt_template`` config
    key.
    """
    if not software_name:
        raise InvalidConfigError("software_name must be non-empty")
    text = template if template is not None else default_system_template()
    base, _, focus_part = text.partition(_FOCUS_SEPARATOR)
    prompt = base.strip()
    if focus and focus_part.strip():
        prompt = prompt + " " + focus_part.strip()
    return prompt.replace("{software_name}", software_name)


@dataclass
class ContextBlock:
    category: SourceCategory
    doc_path: str
    ordinal: int
    text: str
    chunk_id: str = ""
    score: float = 0.0
    origin: Origin = Origin.DIRECT_HIT

    @property
    def header(self) -> str:
        return f"{CONTEXT_HEADER_PREFIX}{self.category.value}] {self.doc_path}#{self.ordinal}"

    def rendered(self) -> str:
        return f"{self.header}\n{self.text}"


@dataclass
class PromptBundle:
    system: str
    context_blocks: list[ContextBlock]
    history: list[ChatMessage]
    user: str
    estimated_tokens: int


def _blocks_from_results(
    results: list[RetrievalResult], corpus: CorpusStore
) -> list[ContextBlock]:
    blocks = []
    for result in results:
        chunk = corpus.get_chunk(result.chunk_id)
        if chunk is None:
            continue
        doc = corpus.get_document(chunk.doc_id)
        blocks.append(
            ContextBlock(
                category=result.category,
                doc_path=doc.source_path if doc else "",
                ordinal=chunk.ordinal,
                text=chunk.text,
                chunk_id=chunk.id,
                score=result.score,
                origin=result.origin,
            )
        )
    rank = {category: i for i, category in enumerate(CATEGORY_BLOCK_ORDER)}
    blocks.sort(key=lambda b: rank[b.category])  # stable: keeps result order within category
    return blocks


def _bundle_estimate(
    system: str, blocks: list[ContextBlock], history: list[ChatMessage], user: str
) -> int:
    total = estimate_tokens(system) + estimate_tokens(user)
    total += sum(estimate_tokens(b.rendered()) for b in blocks)
    total += sum(estimate_tokens(m.content) for m in history)
    return total


def assemble_prompt(
    system: str,
    results: list[RetrievalResult],
    corpus: CorpusStore,
    tree: SessionTree,
    user_prompt: str,
    budget: BudgetConfig,
) -> PromptBundle:
    """Pack system, context, history and user prompt into the token budget.

    Overflow drops, in order: oldest history, lowest-scored neighbor
    blocks, lowest-scored direct-hit blocks. System and user prompt are
    never dropped; if they alone exceed the budget the assembly fails.
    """
    if not user_prompt:
        raise InvalidConfigError("user_prompt must be non-empty")
    limit = budget.prompt_budget
    if estimate_tokens(system) + estimate_tokens(user_prompt) > limit:
        raise BudgetImpossibleError(
            f"system + user prompt alone estimate above budget {limit}"
        )

    blocks = _blocks_from_results(results, corpus)
    history = tree.active_history(budget.history_window)

    def over() -> bool:
        return _bundle_estimate(system, blocks, history, user_prompt) > limit

    while over() and history:
        history = history[1:]
    if over():
        neighbor_drop_order = sorted(
            (b for b in blocks if b.origin is Origin.NEIGHBOR),
            key=lambda b: (b.score, b.chunk_id),
        )
        for victim in neighbor_drop_order:
            if not over():
                break
            blocks = [b for b in blocks if b.chunk_id != victim.chunk_id]
    if over():
        direct_drop_order = sorted(
            (b for b in blocks if b.origin is Origin.DIRECT_HIT),
            key=lambda b: (b.score, b.chunk_id),
        )
        for victim in direct_drop_order:
            if not over():
                break
            blocks = [b for b in blocks if b.chunk_id != victim.chunk_id]

    return PromptBundle(
        system=system,
        context_blocks=blocks,
        history=history,
        user=user_prompt,
        estimated_tokens=_bundle_estimate(system, blocks, history, user_prompt),
    )


def render_context_section(blocks: list[ContextBlock]) -> str:
    return "\n\n".join(b.rendered() for b in blocks)


def bundle_to_messages(bundle: PromptBundle) -> list[dict]:
    """Wire-format messages: context rides in the system message and the
    validator-feedback role maps to user."""
    system_content = bundle.system
    if bundle.context_blocks:
        system_content += "\n\nContext:\n" + render_context_section(bundle.context_blocks)
    messages = [{"role": "system", "content": system_content}]
    for message in bundle.history:
        role = "user" if message.role is Role.VALIDATOR_FEEDBACK else message.role.value
        messages.append({"role": role, "content": message.content})
    messages.append({"role": "user", "content": bundle.user})
    return messages
