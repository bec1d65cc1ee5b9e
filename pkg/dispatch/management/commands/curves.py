from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Write accept/deny probability curves to curves.csv"
    kind = "curves"
