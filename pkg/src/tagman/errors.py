"""Exception hierarchy shared by all tagman modules."""


class TagmanError(Exception):
    """Base class for every error raised by tagman."""


class ManFormatError(TagmanError):
    pass


class MissingTitleHeader(ManFormatError):
    pass


class MalformedTitleHeader(ManFormatError):
    pass


class DuplicateExtendedSection(ManFormatError):
    pass


class CommandMapError(TagmanError):
    pass


class XmlSyntaxError(CommandMapError):
    pass


class SchemaViolation(CommandMapError):
    pass


class EmptyAfterNormalization(TagmanError, ValueError):
    pass


class EmptyQuery(TagmanError, ValueError):
    pass


class DictionaryError(TagmanError, ValueError):
    pass


class CorruptStore(TagmanError):
    pass


class NoHomeDirectory(TagmanError):
    pass


class ProtocolError(TagmanError):
    """A frame could not be decoded, or arrived out of sequence."""

    def __init__(self, message, code="malformed"):
        super().__init__(message)
        self.code = code


class FrameTooLarge(ProtocolError):
    def __init__(self, message):
        super().__init__(message, code="too-large")


class AuthError(TagmanError):
    pass


class ConnectError(TagmanError):
    pass


class BindError(TagmanError):
    pass
