"""Exception types shared by the numerical core and the CLI."""


class ConfigError(ValueError):
    """Invalid configuration, channel spec, prior spec or input file."""


class NumericalError(RuntimeError):
    """A numerical stage failed (sampler collapse, MLE failure, bad fit)."""

    def __init__(self, message: str, stage: str = ""):
        self.stage = stage
        super().__init__(f"[{stage}] {message}" if stage else message)
