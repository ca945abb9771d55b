"""Refined multiparty session types: traces, projection, automata,
centralised and decentralised semantics, localisation and elision."""

__version__ = "0.1.0"
