#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from typing import Optional


class LatentMatchException(Exception):
    """Base for every error raised by latentmatch.

    ``exit_code`` is what the CLI exits with when the error reaches it.
    """
    exit_code = 3


class ConfigError(LatentMatchException):
    exit_code = 1


class SpecError(ConfigError):
    pass


class InputError(LatentMatchException):
    exit_code = 2


class ImageFormatError(InputError):
    pass


class UnsupportedDepthError(ImageFormatError):
    pass


class DictionaryFormatError(InputError):
    pass


class RoiFormatError(InputError):
    pass


class ManifestError(InputError):
    pass


class MinutiaeParseError(InputError):
    def __init__(self, msg: str, line_no: Optional[int] = None, path: Optional[str] = None):
        self.line_no = line_no
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line_no is not None:
            where = f"{where}{line_no}: "
        elif where:
            where = f"{where} "
        super().__init__(f"{where}{msg}")


class InvalidArgument(InputError, ValueError):
    pass


class InsufficientDataError(InputError):
    pass


class DegenerateDataError(InputError):
    pass


class PreconditionError(InputError):
    pass


class NotFoundError(InputError, KeyError):
    def __str__(self):
        # KeyError quotes its message, keep it readable
        return str(self.args[0]) if self.args else ""
