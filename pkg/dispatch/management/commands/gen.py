from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Generate seeded sample paths and write them to paths.txt"
    kind = "gen"
