import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "WeakLabelFlow.settings")
django.setup()
