"""Exception hierarchy shared by all subpackages."""


class PowerTalkError(Exception):
    pass


# grid
class NoVoltageSource(PowerTalkError):
    pass


class NonPositiveResistance(PowerTalkError, ValueError):
    pass


class SingularSystem(PowerTalkError):
    pass


# control
class NotEnabled(PowerTalkError):
    pass


class EmptyReports(PowerTalkError, ValueError):
    pass


# phy
class NotCalibrated(PowerTalkError):
    pass


class InsufficientBlanks(PowerTalkError, ValueError):
    pass


# protocol
class InvalidTag(PowerTalkError):
    pass


class UnexpectedMessage(PowerTalkError):
    pass


class LengthMismatch(PowerTalkError, ValueError):
    pass


class UnknownKind(PowerTalkError, ValueError):
    pass


class ConfigError(PowerTalkError, ValueError):
    """Invalid scenario or sweep configuration.

    ``field`` names the offending config path (e.g. ``phy.t_pt``) when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = ""
        if field is not None:
            where += f"{field}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)
