"""Audit runtime for agentic coding sessions.

Records tool-using sessions as standardized trace streams, checks every step
against declarative architectural seed rules, renders the session as a causal
reasoning DAG, and scores reviewer comprehension against an alert threshold.
"""

__version__ = "0.1.0"
