from reuse_tracer.cli import run

run()
