import csv
import sys
import logging
from typing import IO, Iterator, List, Tuple
from qvpo_analyzer.oracles import OracleSuite, Result

logger = logging.getLogger(__name__)


def analyze(suite: OracleSuite, seed: int = 0, output: IO = None) -> bool:
    """
    Runs an :class:`qvpo_analyzer.oracles.OracleSuite` and writes one CSV line
    per oracle: its name followed by "pass", or by "fail" and what went wrong.
    The first line is a comment listing the suite.

    Returns:
        bool: Whether every oracle passed.
    """
    output = sys.stdout if output is None else output
    results = suite.evaluate(seed)
    output.write("# {suite}\n".format(suite=str(suite)))
    writer = csv.writer(output, lineterminator="\n")
    for result in results:
        line = [str(result.oracle)]
        if result.is_passing:
            line.append("pass")
        else:
            line.append("fail")
            line.append(result.failure)
            logger.warning("oracle %s failed: %s", result.oracle, result.failure)
        writer.writerow(line)
    return all(result.is_passing for result in results)


def load_analysis(f: IO[str]) -> Iterator[Tuple[str, List[str]]]:
    """ Parses the output of :func:`analyze` into ``(oracle, result)`` pairs, where
    ``result`` is ``["pass"]`` or ``["fail", detail]``. """
    for line in csv.reader(filter(lambda line: not line.startswith("#"), f)):
        yield line[0], line[1:]
