"""
Celery app for the sameday project.

Workers pick up queued experiment runs (dispatch.tasks.run_experiment);
beat schedules cleanup_stuck_runs. Broker and limits come from the
CELERY_* Django settings.
"""

import os

from celery import Celery

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "core.settings")

app = Celery("sameday")
app.config_from_object("django.conf:settings", namespace="CELERY")
app.autodiscover_tasks()
