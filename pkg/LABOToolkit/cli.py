# pylint: disable=too-many-arguments
# pylint: disable=raise-missing-from
"""CLI tool for LABOToolkit made using typer.

Exit codes: 0 success, 2 usage, config or file errors, 3 runtime failures.

Example:
    $ LABO --help
"""

import os
import json
from typing import List, Optional
import typer
from halo import Halo
from LABOToolkit.utils import LABOError, LABOClientError
from LABOToolkit.encoders import dumps
from LABOToolkit.parser import write_default
from LABOToolkit.layout import DesignLayout, param_vector, decode, Rejection, morphology_cost
from LABOToolkit.objects import KINDS, SIZES, generate_objects, build_suite, write_manifest, write_obj
from LABOToolkit.grasp import report_row
from LABOToolkit.loop import RunConfig, LABORunner, load_suite, evaluate_design, read_theta
from LABOToolkit.report import aggregate

USAGE_ERROR = 2
RUNTIME_ERROR = 3
KIND_ALIASES = {"thin-plate" : "plate"}

app = typer.Typer(help="LABO CLI")

class Messager():
    """Class for pretty printing messages using typer."""
    def msg(self,tag:str,title:str,message:str,color:str):
        """Pretty messaging for standard log messages."""
        code = typer.style(f"[{tag.upper()}]: {title.upper()}" , fg=color , bold=True)
        typer.echo(code)
        if message:
            typer.echo(message)

    def info(self,title:str,message:str=""):
        """Information message."""
        self.msg("info",title,message,typer.colors.BLUE)

    def warn(self,title:str,message:str=""):
        """Warning message."""
        self.msg("error",title,message,typer.colors.YELLOW)

    def fail(self,title:str,message:str=""):
        """Error message."""
        self.msg("critical error",title,message,typer.colors.RED)

    def good(self,title:str,message:str=""):
        """Success message."""
        self.msg("success",title,message,typer.colors.GREEN)

    def row(self,name:str,row:dict):
        """pretty print one report row."""
        head = typer.style(f"- {name}",fg=typer.colors.GREEN,bold=True)
        typer.echo(head)
        for key in ("power","pinch","lateral","overall","cost","F"):
            typer.echo(f"\t{key} : {row[key]:.4f}")

msg = Messager()


def guarded(action):
    """Runs action and maps toolkit errors onto exit codes."""
    try:
        return action()
    except (LABOClientError,OSError) as ex:
        msg.warn("Invalid input",str(ex))
        raise typer.Exit(USAGE_ERROR)
    except LABOError as ex:
        msg.fail("Run failed",str(ex))
        raise typer.Exit(RUNTIME_ERROR)


@app.command()
def init(
        filepath:str = typer.Argument("labo.config.json",help="Where to write the default configuration")
    ):
    """Write the default run configuration."""
    if os.path.isfile(filepath):
        msg.warn("File exists",f"{filepath} was not overwritten")
        raise typer.Exit(USAGE_ERROR)
    guarded(lambda: write_default(filepath))
    msg.good("Config generated",f"edit {filepath} and start with: LABO run {filepath}")


@app.command(context_settings={"allow_extra_args": True, "ignore_unknown_options": True})
def run(
        ctx:typer.Context,
        config_path:str = typer.Argument(...,help="The run configuration (JSON)"),
        resume:bool = typer.Option(False,'--resume','-r',help="continue from the checkpoint in the output directory",show_default=False)
    ):
    """Run the configured optimizer.

    Any configuration key can be overridden with --key value or
    --section.key value.
    """
    if not os.path.isfile(config_path):
        msg.warn("Config file not found",config_path)
        raise typer.Exit(USAGE_ERROR)
    config = guarded(lambda: RunConfig.from_file(config_path,ctx.args))
    with Halo(text='Loading tasks', spinner='dots'):
        runner = guarded(lambda: LABORunner(config))
    msg.info("Running",f"{config.run.optimizer} with budget {config.run.budget}, output in {runner.out_dir}")
    with Halo(text='Optimizing', spinner='dots'):
        log = guarded(lambda: runner.run(resume))
    if runner.best is not None:
        msg.good("Run complete",f"best F {runner.best[0]:.4f} after {runner.n_evaluations} evaluations")
    else:
        msg.good("Run complete","no evaluations in budget")
    typer.echo(f"run log hash: {log.content_hash()}")


@app.command()
def report(
        run_dirs:List[str] = typer.Argument(...,help="Run directories to aggregate"),
        out_dir:str = typer.Option("tables",'--out','-o',help="Directory for the tables"),
        split:str = typer.Option("test",'--split','-s',help="train or test tasks")
    ):
    """Aggregate runs into method, complexity and finger tables."""
    if split not in ("train","test"):
        msg.warn("Invalid split","use train or test")
        raise typer.Exit(USAGE_ERROR)
    with Halo(text='Aggregating', spinner='dots'):
        tables = guarded(lambda: aggregate(run_dirs,out_dir,split))
    for name,table in tables.items():
        msg.info(name,f"{len(table.rows)} rows written to {os.path.join(out_dir,name)}.csv")


@app.command()
def objects(
        kind:str = typer.Argument(...,help=f"One of {', '.join(KINDS)} (thin-plate is an alias of plate)"),
        count:int = typer.Argument(...,help="Number of objects"),
        seed:int = typer.Argument(...,help="Generator seed"),
        out_dir:str = typer.Option("objects",'--out','-o',help="Directory for the object manifests"),
        size:str = typer.Option("regular",'--size',help=f"One of {', '.join(SIZES)}"),
        mesh:bool = typer.Option(False,'--mesh',help="also write a Wavefront mesh per object",show_default=False)
    ):
    """Generate procedural objects and write one manifest per object."""
    kind = KIND_ALIASES.get(kind,kind)
    models = guarded(lambda: generate_objects(kind,count,seed,size))
    os.makedirs(out_dir,exist_ok=True)
    index = []
    for obj in models:
        name = obj.object_id + ".json"
        with open(os.path.join(out_dir,name),'w') as stream:
            stream.write(dumps(obj.to_json(),indent=2))
        if mesh:
            write_obj(os.path.join(out_dir,obj.object_id + ".obj"),*obj.mesh())
        index.append(name)
    with open(os.path.join(out_dir,"objects.json"),'w') as stream:
        json.dump({"kind" : kind, "size" : size, "seed" : seed, "objects" : index},stream,indent=2)
    msg.good("Objects generated",f"{len(models)} manifests in {out_dir}")


@app.command("eval")
def evaluate(
        theta_file:str = typer.Argument(...,help="File with one design value per line"),
        config_path:Optional[str] = typer.Option(None,'--config','-c',help="Run configuration for suite and evaluator settings"),
        manifest:Optional[str] = typer.Option(None,'--manifest','-m',help="Task suite manifest"),
        output:bool = typer.Option(False,'--output','-o',help="print results in json format",show_default=False)
    ):
    """Score a stored design on the train and test tasks."""
    if not os.path.isfile(theta_file):
        msg.warn("Design file not found",theta_file)
        raise typer.Exit(USAGE_ERROR)
    overrides = ["--suite.manifest",manifest] if manifest else []
    config = guarded(lambda: RunConfig.from_file(config_path,overrides))
    theta = guarded(lambda: param_vector(read_theta(theta_file)))
    decoded = decode(theta,None,config.design.control_mode,config.design.min_finger_angle_deg)
    with Halo(text='Evaluating', spinner='dots'):
        suite = guarded(lambda: load_suite(config))
        train, test = guarded(lambda: evaluate_design(theta,suite,config))
    rows = {"train" : report_row(train), "test" : report_row(test)}
    if output:
        typer.echo(dumps({**rows, "rejected" : train.rejected}))
        return
    if isinstance(decoded,Rejection):
        msg.warn("Design rejected",decoded.rule)
    else:
        msg.info("Morphology",f"{decoded[0].n_fingers} fingers, cost {morphology_cost(decoded[0]):.4f}")
    for name,row in rows.items():
        msg.row(name,row)


@app.command()
def suite(
        filepath:str = typer.Argument(...,help="Where to write the manifest"),
        n_tasks:int = typer.Option(160,'--n-tasks',help="Training tasks"),
        n_test:int = typer.Option(48,'--n-test',help="Test tasks"),
        seed:int = typer.Option(0,'--seed',help="Suite seed")
    ):
    """Write the task-suite manifest of the procedural benchmark."""
    with Halo(text='Building suite', spinner='dots'):
        tasks = guarded(lambda: build_suite(n_tasks,n_test,seed))
    guarded(lambda: write_manifest(tasks,filepath))
    msg.good("Manifest written",f"{tasks.n_tasks} train and {len(tasks.test_tasks)} test tasks, hash {tasks.content_hash()}")


@app.command()
def layout(
        filepath:str = typer.Argument("layout.yml",help="Where to write the layout schema")
    ):
    """Write the design vector layout as YAML."""
    guarded(lambda: DesignLayout().dump(filepath))
    msg.good("Layout written",filepath)
