"""
DRF Serializers for the dispatch app.
"""

from rest_framework import serializers

from .exceptions import PolicySpecError
from .models import CellResult, ExperimentRun
from .services.policies import parse_policy_spec

FLAT_PARAM_KEYS = {"config", "days", "family", "trials", "paths", "checkpoints", "overrides"}


class CellResultSerializer(serializers.ModelSerializer):
    """Serializer for reading per-cell outcomes"""

    mean_served = serializers.FloatField(read_only=True)

    class Meta:
        model = CellResult
        fields = [
            "id",
            "position",
            "fleet_m",
            "fleet_n",
            "geography",
            "policy",
            "mean_served",
            "served",
            "requests",
        ]
        read_only_fields = fields


class ExperimentRunCreateSerializer(serializers.ModelSerializer):
    """Serializer for queueing experiment runs"""

    class Meta:
        model = ExperimentRun
        fields = ["kind", "seed", "params"]

    def validate_params(self, value):
        """Validate params is a dict of known keys"""
        if not isinstance(value, dict):
            raise serializers.ValidationError("Params must be a JSON object")
        unknown = set(value) - FLAT_PARAM_KEYS
        if unknown:
            raise serializers.ValidationError(f"Unknown params: {', '.join(sorted(unknown))}")
        overrides = value.get("overrides", {})
        if not isinstance(overrides, dict):
            raise serializers.ValidationError("Overrides must be a JSON object")
        policies = overrides.get("policies", [])
        if isinstance(policies, str):
            policies = [part for part in policies.split(";") if part.strip()]
        for text in policies:
            try:
                parse_policy_spec(text)
            except PolicySpecError as exc:
                raise serializers.ValidationError(str(exc))
        return value

    def validate_seed(self, value):
        """Validate seed is non-negative"""
        if value < 0:
            raise serializers.ValidationError("Seed must be non-negative")
        return value


class ExperimentRunSerializer(serializers.ModelSerializer):
    """Serializer for reading experiment runs"""

    cell_count = serializers.IntegerField(source="cells.count", read_only=True)

    class Meta:
        model = ExperimentRun
        fields = [
            "id",
            "kind",
            "status",
            "seed",
            "params",
            "result",
            "out_dir",
            "error_code",
            "error_message",
            "cell_count",
            "created_at",
            "started_at",
            "finished_at",
        ]
        read_only_fields = fields
