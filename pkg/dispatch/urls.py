"""
URL configuration for the dispatch app.
"""

from django.urls import include, path
from rest_framework.routers import DefaultRouter

from .views import ExperimentRunViewSet

router = DefaultRouter()
router.register(r"runs", ExperimentRunViewSet, basename="run")

urlpatterns = [
    path("", include(router.urls)),
]
