"""Pluggable token counting for context budgets and length filtering."""

from __future__ import annotations

from pathlib import Path

from .errors import TokenizerFailure

MODE_APPROXIMATE = "approximate"
MODE_VOCAB = "vocab"


class TokenizerHandle:
    """Counts tokens either by a chars/4 estimate or a vocab-file greedy match.

    The approximate mode is total (defined for every string) and is the
    default everywhere; the vocab mode exists so a deployment can swap in the
    token inventory of its actual model family.
    """

    def __init__(self, mode: str = MODE_APPROXIMATE, vocab_path: str | Path | None = None):
        if mode not in (MODE_APPROXIMATE, MODE_VOCAB):
            raise TokenizerFailure(f"unknown tokenizer mode {mode!r}")
        self.mode = mode
        self._vocab: set[str] = set()
        self._max_len = 0
        if mode == MODE_VOCAB:
            if vocab_path is None:
                raise TokenizerFailure("vocab mode requires a vocab file path")
            try:
                lines = Path(vocab_path).read_text(encoding="utf-8").splitlines()
            except OSError as exc:
                raise TokenizerFailure(f"cannot read vocab file: {exc}") from exc
            self._vocab = {line for line in lines if line}
            if not self._vocab:
                raise TokenizerFailure("vocab file is empty")
            self._max_len = max(len(tok) for tok in self._vocab)

    def count(self, text: str) -> int:
        if self.mode == MODE_APPROXIMATE:
            return (len(text) + 3) // 4
        return self._count_vocab(text)

    def _count_vocab(self, text: str) -> int:
        # Greedy longest match; unknown characters count one token each.
        tokens = 0
        i = 0
        n = len(text)
        while i < n:
            matched = 0
            for length in range(min(self._max_len, n - i), 0, -1):
                if text[i : i + length] in self._vocab:
                    matched = length
                    break
            tokens += 1
            i += matched if matched else 1
        return tokens
