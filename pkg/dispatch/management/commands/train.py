from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Train a network bank and write bank.sdqb and learning_curve.csv"
    kind = "train"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--paths", help="Train on a paths.txt written by gen")

    def build_params(self, options):
        return {"paths": options["paths"]} if options["paths"] else {}
