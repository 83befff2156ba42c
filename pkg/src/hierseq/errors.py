"""Exception types; each maps to a distinct CLI exit code."""


class HierSeqError(Exception):
    exit_code = 1


class ConfigError(HierSeqError):
    exit_code = 2


class DataError(HierSeqError):
    exit_code = 3


class NumericError(HierSeqError):
    exit_code = 4
