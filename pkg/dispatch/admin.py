"""
Django admin configuration for the dispatch app.
"""

from django.contrib import admin
from django.utils.html import format_html

from .models import CellResult, ExperimentRun


class CellResultInline(admin.TabularInline):
    model = CellResult
    extra = 0
    fields = ["position", "fleet_m", "fleet_n", "geography", "policy", "mean_served"]
    readonly_fields = fields
    can_delete = False


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    """Admin for ExperimentRun model"""

    list_display = [
        "id",
        "kind",
        "status_badge",
        "seed",
        "error_code",
        "created_at",
        "finished_at",
    ]
    list_filter = ["kind", "status", "created_at"]
    search_fields = ["out_dir", "error_message"]
    readonly_fields = [
        "status",
        "result",
        "error_code",
        "error_message",
        "created_at",
        "updated_at",
        "started_at",
        "finished_at",
    ]
    ordering = ["-created_at"]
    inlines = [CellResultInline]

    fieldsets = (
        ("Run", {"fields": ("kind", "seed", "params", "out_dir")}),
        (
            "Outcome",
            {
                "fields": (
                    "status",
                    "result",
                    "error_code",
                    "error_message",
                    "created_at",
                    "updated_at",
                    "started_at",
                    "finished_at",
                ),
            },
        ),
    )

    def status_badge(self, obj):
        """Display status as a colored badge"""
        colors = {
            ExperimentRun.Status.PENDING: "#FFA500",
            ExperimentRun.Status.QUEUED: "#1E90FF",
            ExperimentRun.Status.RUNNING: "#00CED1",
            ExperimentRun.Status.COMPLETED: "#32CD32",
            ExperimentRun.Status.FAILED: "#DC143C",
        }
        color = colors.get(obj.status, "#808080")
        return format_html(
            '<span style="background-color: {}; color: white; padding: 3px 10px; '
            'border-radius: 3px;">{}</span>',
            color,
            obj.get_status_display(),
        )

    status_badge.short_description = "Status"


@admin.register(CellResult)
class CellResultAdmin(admin.ModelAdmin):
    """Admin for CellResult model"""

    list_display = ["id", "run", "fleet", "geography", "policy", "days", "mean_served"]
    list_filter = ["geography", "policy", "fleet_m", "fleet_n"]
    search_fields = ["policy"]
    readonly_fields = ["created_at", "updated_at"]
    ordering = ["run", "position"]

    def fleet(self, obj):
        return f"({obj.fleet_m}, {obj.fleet_n})"

    def days(self, obj):
        return len(obj.served)
