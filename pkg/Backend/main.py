import functools
import logging
import traceback

import typer
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.logging import RichHandler

from app.commands import cluster, distance, enrich, geodesic, loo, mean_pca, permtest, simulate
from app.core.exceptions import INPUT_ERROR, ElastishapeException

load_dotenv()

logger = logging.getLogger("app")

app = typer.Typer(name="elastishape", help="Elastic shape analysis of closed planar contours.",
                  no_args_is_help=True, pretty_exceptions_enable=False)


def handled(command):
    """Maps library errors to exit codes: 2 for bad input, 3 for non-convergence."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except ElastishapeException as e:
            logger.error(e.detail)
            logger.debug(traceback.format_exc())
            raise typer.Exit(code=e.exit_code)
        except ValidationError as e:
            logger.error(f"Invalid configuration: {e}")
            raise typer.Exit(code=INPUT_ERROR)
    return wrapper


@app.callback()
def configure(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging.")):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(show_path=False, rich_tracebacks=True)],
        force=True,
    )


app.command("distance")(handled(distance.run))
app.command("geodesic")(handled(geodesic.run))
app.command("mean-pca")(handled(mean_pca.run))
app.command("cluster")(handled(cluster.run))
app.command("permtest")(handled(permtest.run))
app.command("enrich")(handled(enrich.run))
app.command("simulate")(handled(simulate.run))
app.command("loo")(handled(loo.run))


if __name__ == "__main__":
    app()
