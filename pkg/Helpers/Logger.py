import collections
import os

from twisted.logger import Logger as TwistedLogger


class Logger:
    """Tab separated event log stamped with simulated time.

    Every event is counted under (component, category, key), optionally
    written to a log file, and re-emitted through twisted.logger so that the
    command line can show it live.
    """

    def __init__(self, logPath=None, headerDict={}, clock=None):
        self.logPath = logPath
        self.sep = '\t'
        self.endLine = '\n'
        self.additionalDict = headerDict
        self.clock = clock
        self.counters = collections.Counter()
        self.twistedLog = TwistedLogger(namespace="wedgechain")

        if self.logPath is not None and not os.path.isfile(self.logPath):
            self.writeHeader()

    def writeHeader(self):
        with open(self.logPath, 'w') as logFile:
            for key, value in self.additionalDict.items():
                logFile.write(
                    "#" + self.sep + key + self.sep + str(value) + self.endLine)
            logFile.write(self.endLine)

    def listToStringLine(self, thisList):
        stringLine = self.sep.join([str(x) for x in thisList])
        return stringLine

    def now(self):
        return self.clock() if self.clock is not None else 0.0

    def addLine(self, listToLog):
        fullList = ["{:.3f}".format(self.now())] + listToLog
        stringLine = self.listToStringLine(fullList)

        if self.logPath is not None:
            with open(self.logPath, 'a') as logFile:
                logFile.write(stringLine + self.endLine)
        return stringLine

    def event(self, component, level, category, key, value="", node=""):
        self.counters[(component, category, key)] += 1
        stringLine = self.addLine(
            [component, node, level.upper(), category, key, value])

        # Forward to whatever observers twisted.logger has been given.
        emit = getattr(self.twistedLog, level, self.twistedLog.info)
        emit("{line}", line=stringLine)

    def count(self, component, category, key):
        return self.counters[(component, category, key)]
