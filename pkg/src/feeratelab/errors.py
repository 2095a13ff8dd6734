# -*- coding: utf-8 -*-
# SPDX-License-Identifier: GPL-2.0


##########################################################################################
# Class definitions
##########################################################################################

class FeeLabError(RuntimeError):
    '''
    Base class of all errors raised on bad input, bad data or a failed estimate.

    The CLI maps these to the user-error exit code.
    '''

class InvalidInputError(FeeLabError):
    pass

class ParseError(FeeLabError):
    '''
    Raised when a dump file does not conform to the schema.

    row   - 1-based line number in the file (header is line 1), or None
    field - name of the offending column, or None
    '''

    def __init__(self, msg: str, row: int = None, field: str = None):
        location = []

        if row is not None:
            location.append(f'row {row}')

        if field is not None:
            location.append(f'field {field}')

        if location:
            msg = ': '.join([', '.join(location), msg])

        super().__init__(msg)

        self.row = row
        self.field = field

class ValidationError(FeeLabError):
    pass

class ConfigError(FeeLabError):
    pass

class InsufficientDataError(FeeLabError):
    pass

class InsufficientHistoryError(FeeLabError):
    pass

class OutOfBoundaryError(FeeLabError):
    pass

class UntrainedModelError(FeeLabError):
    pass

class MaxFeerateReachedError(FeeLabError):
    pass

class TrainingDivergedError(FeeLabError):
    pass
