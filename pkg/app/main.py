from pathlib import Path
from typing import Annotated

import typer
from rich.console import Console
from rich.table import Table

from app.commands.experiments import COMMANDS, RunResult, execute
from app.commands.suite import run_suite
from app.exceptions import InvalidInputError, ToolkitError
from app.files import read_config_file
from app.logger import configure_logging

app = typer.Typer(
    help='Dominação esparsa e estimação do vetor de Riesz.',
    no_args_is_help=True,
)
console = Console()


@app.callback()
def main(
    log_level: Annotated[
        str, typer.Option('--log-level', help='DEBUG, INFO ou WARNING.')
    ] = 'INFO',
):
    configure_logging(log_level)


def parse_flags(tokens: list[str]) -> dict[str, str]:
    """
    Converte `--chave valor` em um dicionário plano.

    `--chave=valor` também é aceito; uma flag sem valor vale `true` e
    `--no-chave` vale `false`. Hífens viram sublinhados.

    Raises:
        InvalidInputError:
            - Token solto que não é uma flag.

    Example:
        ['--engine', 'mc', '--paths', '100000', '--no-bridge']
        -> {'engine': 'mc', 'paths': '100000', 'bridge': 'false'}
    """
    raw = {}
    index = 0
    while index < len(tokens):
        token = tokens[index]
        if not token.startswith('--'):
            raise InvalidInputError(
                f'Argumento inesperado {token!r}; use --chave valor.'
            )
        key, value = token[2:], None
        index += 1
        if '=' in key:
            key, value = key.split('=', 1)
        elif index < len(tokens) and not tokens[index].startswith('--'):
            value = tokens[index]
            index += 1
        elif key.startswith('no-'):
            key, value = key[3:], 'false'
        else:
            value = 'true'
        raw[key.replace('-', '_')] = value
    return raw


def show(result: RunResult) -> None:
    table = Table(title=f'{result.command} -> {result.output}')
    table.add_column('checagem')
    table.add_column('status')
    table.add_column('detalhe')
    for check in result.checks:
        status = '[green]ok[/green]' if check.ok else '[red]falhou[/red]'
        table.add_row(check.name, status, check.detail)
    console.print(table)


@app.command(
    context_settings={
        'allow_extra_args': True,
        'ignore_unknown_options': True,
    },
    help=f'Executa um comando: {", ".join(COMMANDS)}.',
)
def run(
    ctx: typer.Context,
    command: Annotated[str, typer.Argument(help='Nome do comando.')],
    config: Annotated[
        Path | None,
        typer.Option('--config', help='Arquivo chave = valor.'),
    ] = None,
):
    """
    Executa um comando com flags planas e grava CSVs e o manifesto.

    Flags da linha de comando sobrepõem as do arquivo `--config`. O
    código de saída é 0 quando todas as checagens passam, 1 quando
    alguma falha e o `exit_code` do erro quando a execução é abortada.

    Example:
        sparse-riesz run weakType --engine mc --paths 100000 --seed 7
    """
    try:
        raw = read_config_file(config) if config is not None else {}
        raw.update(parse_flags(ctx.args))
        result = execute(command, raw)
    except ToolkitError as error:
        console.print(f'[red]Erro:[/red] {error.detail}')
        raise typer.Exit(code=error.exit_code)
    show(result)
    if not result.ok:
        console.print(f'[red]Falhas:[/red] {", ".join(result.failures)}')
        raise typer.Exit(code=1)


@app.command()
def suite(
    name: Annotated[str, typer.Argument(help='acceptance ou quick.')],
    seed: Annotated[int | None, typer.Option('--seed')] = None,
    output: Annotated[Path | None, typer.Option('--output')] = None,
):
    """Executa uma bateria de critérios, uma linha por critério."""
    try:
        frame = run_suite(name, seed, output)
    except ToolkitError as error:
        console.print(f'[red]Erro:[/red] {error.detail}')
        raise typer.Exit(code=error.exit_code)
    table = Table(title=f'suite {name}')
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*(str(value) for value in row))
    console.print(table)
    failed = frame.loc[~frame['ok'], 'criterion'].tolist()
    if failed:
        console.print(f'[red]Critérios reprovados:[/red] {", ".join(failed)}')
        raise typer.Exit(code=1)


if __name__ == '__main__':
    app()
