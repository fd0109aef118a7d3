"""Critic backends and the graph / evaluate / refine operations."""

from .api import (OutputRejected, Refinement, construct_graph, evaluate_rollouts,
                  extract_program_text, refine_reward)
from .base import (MAX_REPAIR, PROBLEM_TAGS, CriticBackend, CriticError,
                   CriticRequest, CriticTransportError, Feedback, IrreparableOutput,
                   Problem, call_with_repair, parse_feedback, repair, stalled_stage)
from .prompts import (EVALUATE_TEMPLATE, GRAPH_TEMPLATE, NO_CHANGE, REFINE_TEMPLATE,
                      TEMPLATES, PromptTemplate, UnresolvedPlaceholder)
from .remote import RemoteCritic, RetryPolicy, SessionStore, request_key
from .scripted import ScriptedCritic
from .transcripts import RolloutTranscript

__all__ = [
    "EVALUATE_TEMPLATE", "GRAPH_TEMPLATE", "MAX_REPAIR", "NO_CHANGE", "PROBLEM_TAGS",
    "REFINE_TEMPLATE", "TEMPLATES", "CriticBackend", "CriticError", "CriticRequest",
    "CriticTransportError", "Feedback", "IrreparableOutput", "OutputRejected", "Problem",
    "PromptTemplate", "Refinement", "RemoteCritic", "RetryPolicy", "RolloutTranscript",
    "ScriptedCritic", "SessionStore", "UnresolvedPlaceholder", "call_with_repair",
    "construct_graph", "evaluate_rollouts", "extract_program_text", "parse_feedback",
    "refine_reward", "repair", "request_key", "stalled_stage",
]
