import pytest
from hypothesis import settings

from gradlre.data import Corpus, LabelInventory, RelationMention

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def inventory():
    return LabelInventory(("no_relation", "a(e1,e2)", "a(e2,e1)", "b"), 0)


@pytest.fixture
def tiny_corpus(inventory):
    mentions = [
        RelationMention(("x", "caused", "y", "."), (0, 1), (2, 3), 1),
        RelationMention(("the", "y", "from", "the", "x"), (1, 2), (4, 5), 2),
        RelationMention(("p", "q"), (0, 1), (1, 2), 0),
        RelationMention(("m", "near", "n", "today"), (0, 1), (2, 3), None),
    ]
    return Corpus(inventory, tuple(mentions))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
