"""Opcode numbering shared by the pure and compiled bytecode evaluators.

Bytecode is a flat int32 array of (opcode, operand) pairs.  Operands are
meaningful only for PUSH_CONST (index into the constant pool) and
PUSH_VAR (index into the argument vector); other entries carry 0.
"""

PUSH_CONST = 0
PUSH_VAR = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
POW = 6
NEG = 7
SIN = 8
COS = 9
TAN = 10
EXP = 11
LOG = 12
SQRT = 13
ABS = 14
ATAN2 = 15

# numeric error codes shared with the compiled extension
ERR_DIV_ZERO = 1
ERR_LOG_DOMAIN = 2
ERR_SQRT_DOMAIN = 3
ERR_POW_DOMAIN = 4
ERR_OVERFLOW = 5

ERROR_KINDS = {
    ERR_DIV_ZERO: "division-by-zero",
    ERR_LOG_DOMAIN: "log-domain",
    ERR_SQRT_DOMAIN: "sqrt-domain",
    ERR_POW_DOMAIN: "pow-domain",
    ERR_OVERFLOW: "overflow",
}
