"""Grammar-masked text generation.

An incremental byte-level Earley recognizer decides, at every step, which
vocabulary tokens keep the output a viable prefix of a context-free grammar.
"""
from .decoder import DecodeResult, DecodeSession, Status, decode, decode_unconstrained
from .earley import ParserState, ParseReport, extract_derivation, is_prefix, recognize
from .grammar import Grammar, load_grammar, parse_grammar
from .lm import NGramModel, NoiseWrapper, train_ngram
from .masking import TokenTrie, Vocabulary, build_token_trie, compute_mask, forced_continuation

__all__ = [
    "DecodeResult",
    "DecodeSession",
    "Status",
    "decode",
    "decode_unconstrained",
    "ParserState",
    "ParseReport",
    "extract_derivation",
    "is_prefix",
    "recognize",
    "Grammar",
    "load_grammar",
    "parse_grammar",
    "NGramModel",
    "NoiseWrapper",
    "train_ngram",
    "TokenTrie",
    "Vocabulary",
    "build_token_trie",
    "compute_mask",
    "forced_continuation",
]
