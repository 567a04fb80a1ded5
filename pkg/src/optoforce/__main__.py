from optoforce.infra.cli import run

run()
