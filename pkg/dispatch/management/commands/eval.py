from ._base import ExperimentCommand, parse_checkpoint


class Command(ExperimentCommand):
    help = "Evaluate policies over the fleet x geography matrix and write report.csv"
    kind = "eval"
    days_param = False

    def shared_overrides(self, options):
        overrides = super().shared_overrides(options)
        if options["fleet"] is not None:
            overrides["fleets"] = "{},{}".format(*options["fleet"])
        if options["geography"]:
            overrides["geographies"] = options["geography"]
        if options["days"] is not None:
            overrides["eval_days"] = options["days"]
        if options["policy"]:
            overrides["policies"] = options["policy"]
        return overrides

    def build_params(self, options):
        checkpoints = dict(
            parse_checkpoint(text, options["fleet"], options["geography"])
            for text in options["checkpoint"] or []
        )
        return {"checkpoints": checkpoints}
