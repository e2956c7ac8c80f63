"""Agentic question answering over long videos with a three-tier memory."""

from .controller import AgentConfig, Engine, FinalAnswer, RunAborted, parse_answer, run
from .costmodel import compare, estimate_arm, estimate_dvd, tally, tokens_per_frame

__version__ = "0.1.0"
