# Generated by Django 5.2.7 on 2026-10-17 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("updated_at", models.DateTimeField(auto_now=True)),
                (
                    "kind",
                    models.CharField(
                        choices=[
                            ("gen", "Generate sample paths"),
                            ("tune", "Tune threshold"),
                            ("train", "Train network bank"),
                            ("eval", "Evaluate policy matrix"),
                            ("analyze", "Analytic thresholds"),
                            ("curves", "Probability curves"),
                        ],
                        db_index=True,
                        max_length=20,
                    ),
                ),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("pending", "Pending"),
                            ("queued", "Queued"),
                            ("running", "Running"),
                            ("completed", "Completed"),
                            ("failed", "Failed"),
                        ],
                        db_index=True,
                        default="pending",
                        max_length=20,
                    ),
                ),
                ("seed", models.BigIntegerField(default=0)),
                ("params", models.JSONField(blank=True, default=dict)),
                ("result", models.JSONField(blank=True, default=dict)),
                ("out_dir", models.CharField(blank=True, max_length=500)),
                ("error_code", models.CharField(blank=True, max_length=30)),
                ("error_message", models.TextField(blank=True, null=True)),
                ("started_at", models.DateTimeField(blank=True, null=True)),
                ("finished_at", models.DateTimeField(blank=True, null=True)),
            ],
            options={
                "db_table": "experiment_runs",
                "ordering": ["-created_at"],
                "indexes": [
                    models.Index(
                        fields=["kind", "status"], name="experiment_kind_status_idx"
                    ),
                    models.Index(fields=["created_at"], name="experiment_created_idx"),
                ],
            },
        ),
        migrations.CreateModel(
            name="CellResult",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("created_at", models.DateTimeField(auto_now_add=True)),
                ("updated_at", models.DateTimeField(auto_now=True)),
                ("position", models.PositiveIntegerField(default=0)),
                ("fleet_m", models.PositiveSmallIntegerField()),
                ("fleet_n", models.PositiveSmallIntegerField()),
                ("geography", models.CharField(max_length=20)),
                ("policy", models.CharField(max_length=100)),
                ("served", models.JSONField(default=list)),
                ("requests", models.JSONField(default=list)),
                (
                    "run",
                    models.ForeignKey(
                        on_delete=django.db.models.deletion.CASCADE,
                        related_name="cells",
                        to="dispatch.experimentrun",
                    ),
                ),
            ],
            options={
                "db_table": "cell_results",
                "ordering": ["run", "position"],
                "indexes": [
                    models.Index(
                        fields=["fleet_m", "fleet_n", "geography"],
                        name="cell_fleet_geo_idx",
                    )
                ],
            },
        ),
    ]
