import pytest

from packbench import TokenSequence

# The four worked-example sequences (lengths 4, 8, 5, 11) used as the golden
# fixture throughout the suite.
EXAMPLE_TOKENS = (
    (10, 11, 12, 13),
    (20, 21, 22, 23, 24, 25, 26, 27),
    (30, 31, 32, 33, 34),
    (40, 41, 42, 43, 44, 45, 46, 47, 48, 49, 410),
)

GOLDEN_INPUT_IDS = tuple(t for seq in EXAMPLE_TOKENS for t in seq)
GOLDEN_LABELS = tuple(
    -100 if i == 0 else t for seq in EXAMPLE_TOKENS for i, t in enumerate(seq)
)
GOLDEN_POSITION_IDS = tuple(i for seq in EXAMPLE_TOKENS for i in range(len(seq)))
GOLDEN_CU_SEQLENS = [0, 4, 12, 17, 28]


@pytest.fixture
def paper_examples() -> list[TokenSequence]:
    return [TokenSequence(i, toks) for i, toks in enumerate(EXAMPLE_TOKENS)]


def make_dataset(lengths, start_token: int = 0) -> list[TokenSequence]:
    """Dataset with the given lengths and distinct tokens per example."""
    return [
        TokenSequence(i, tuple(i * 1000 + start_token + k for k in range(n)))
        for i, n in enumerate(lengths)
    ]
