class ToolkitError(Exception):
    """Erro base do toolkit, com mensagem legível em `detail`."""

    exit_code: int = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class InvalidInputError(ToolkitError):
    """Entrada malformada ou fora do domínio da operação."""


class BudgetExceededError(ToolkitError):
    """Orçamento de enumeração, grade ou saltos excedido."""

    exit_code = 3


class StabilityError(ToolkitError):
    """Passo de Euler instável ou matriz de deriva inválida."""


class SubordinationError(ToolkitError):
    """Subordinação diferencial violada onde é exigida."""


class ConstructionError(ToolkitError):
    """Falha interna de construção (orçamento de níveis, telescopagem)."""

    exit_code = 4
