from Helpers.Logger import Logger


def test_events_are_tab_separated_after_a_header(tmp_path):
    path = str(tmp_path / "events.log")
    clock = iter([1.5, 2.25])
    logger = Logger(path, {"seed": 3}, clock=lambda: next(clock))

    logger.event("edge", "info", "seal", "block", 0, node="edge0")
    logger.event("cloud", "warn", "merge", "replayed_entries", 2)

    with open(path) as logFile:
        lines = logFile.read().split("\n")
    assert lines[0] == "#\tseed\t3"
    assert lines[1] == ""
    assert lines[2].split("\t") == ["1.500", "edge", "edge0", "INFO", "seal",
                                    "block", "0"]
    assert lines[3].split("\t") == ["2.250", "cloud", "", "WARN", "merge",
                                    "replayed_entries", "2"]


def test_events_are_counted_without_a_file():
    logger = Logger()
    for _ in range(3):
        logger.event("client", "warn", "dispute", "add")
    assert logger.count("client", "dispute", "add") == 3
    assert logger.count("client", "dispute", "read") == 0
