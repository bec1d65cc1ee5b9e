from django.core.management.base import CommandError

from ...services.experiment_service import ERROR_EXIT_CODES, TUNABLE
from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Tune a threshold policy (pfa, pfa_rej or delta) by grid enumeration"
    kind = "tune"

    def build_params(self, options):
        policies = options["policy"] or ["pfa"]
        if len(policies) != 1:
            raise CommandError("tune takes a single --policy", returncode=ERROR_EXIT_CODES["usage"])
        family = policies[0].partition(":")[0]
        if family not in TUNABLE:
            raise CommandError(
                f"Cannot tune {family!r}; choose from {', '.join(TUNABLE)}",
                returncode=ERROR_EXIT_CODES["usage"],
            )
        return {"family": family}
