from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Compute distance thresholds b* and compare closed forms with simulation"
    kind = "analyze"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--trials", type=int, help="Monte-Carlo trials per grid point (0 skips)")

    def build_params(self, options):
        return {} if options["trials"] is None else {"trials": options["trials"]}
