from van_lka.conf import configure_standalone

configure_standalone()
