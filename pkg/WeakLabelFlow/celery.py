"""
Конфигурация Celery для фоновых запусков пайплайна.

Настраивает Celery для работы с Django. Задачи (tasks.py) запускают
полный прогон пайплайна или его возобновление вне процесса CLI.
"""
import os

from celery import Celery

# Указываем Django, где искать настройки
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'WeakLabelFlow.settings')

app = Celery('WeakLabelFlow')

# Загружаем настройки из settings.py, все переменные с префиксом CELERY_
app.config_from_object('django.conf:settings', namespace='CELERY')

# Автоматически находим задачи (tasks.py) во всех приложениях
app.autodiscover_tasks()
