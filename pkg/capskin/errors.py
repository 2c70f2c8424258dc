EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4


class CapskinError(Exception):
    """Base class of every error raised by capskin. Carries its CLI exit code."""

    exit_code = EXIT_FAILED


class UsageError(CapskinError):
    exit_code = EXIT_USAGE


class ValidationError(CapskinError):
    """Raised when an argument or a constructed value breaks a precondition."""

    exit_code = EXIT_USAGE


class StorageError(CapskinError):
    exit_code = EXIT_IO


class SchemaError(CapskinError):
    exit_code = EXIT_SCHEMA


class MeshFormatError(SchemaError):
    def __init__(self, path, line, msg):
        self.path = path
        self.line = line
        if line is None:
            super().__init__("%s: %s" % (path, msg))
        else:
            super().__init__("%s:%d: %s" % (path, line, msg))


class DatasetSchemaError(SchemaError):
    def __init__(self, path, line, msg):
        self.path = path
        self.line = line
        super().__init__("%s:%d: %s" % (path, line, msg))


class ModelVersionError(SchemaError):
    def __init__(self, found, expected):
        self.found = found
        self.expected = expected
        super().__init__(
            "unsupported model version %r, expected %r" % (found, expected)
        )


class CorruptModelError(SchemaError):
    pass
