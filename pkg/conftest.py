import os

import django


os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'tests.test_settings')
django.setup()

# chamber patches django's Atomic on import; load it before any TestCase enters its class-level atomic block
import chamber  # noqa: E402,F401


def pytest_collection_modifyitems(config, items):
    # germanium's ``test_call_command`` helper is imported into test modules; it is not a test
    items[:] = [
        item for item in items
        if getattr(getattr(item, 'function', None), '__module__', '') != 'germanium.tools.django'
    ]
