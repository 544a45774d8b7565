"""Exception hierarchy shared by the lab modules."""


class LabError(Exception):
    """Base class for every error raised by the lab."""


class ConfigError(LabError):
    pass


class ResourceError(LabError):
    pass


class StateError(LabError):
    pass


class DescriptorError(LabError):
    pass


class ProcessError(LabError):
    pass


class UnsupportedMappingError(LabError):
    """Device and procfs nodes cannot be memory mapped."""


class WouldBlock(LabError):
    pass


class ExecError(LabError):
    pass


class PrivilegeError(LabError):
    pass


class KernelFault(LabError):
    """Jump to an unmapped kernel address; the host is marked crashed."""


class LookupFailure(LabError):
    pass


class ExtractionError(LabError):
    pass


class HandshakeError(LabError):
    pass


class FramingError(LabError):
    pass


class ChannelError(LabError):
    """Decrypted frame body failed structural validation."""


class NotFound(LabError):
    pass


class PolicyError(LabError):
    pass
