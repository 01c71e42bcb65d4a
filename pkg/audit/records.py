import logging

from django.db import DatabaseError

from .models import RunLog

logger = logging.getLogger(__name__)


def run_status(operation_log, failed=False):
    if failed:
        return RunLog.Status.FAILED
    if operation_log and operation_log.get('failed'):
        return RunLog.Status.COMPLETED_WITH_FAILURES
    return RunLog.Status.COMPLETED


def record_run(command, operation_log=None, status=None, seed=None, jobs=1, config_hash='', artifact='',
               duration=0.0):
    """Persist one pipeline run; a database without the run log table only costs a warning."""
    operation_log = operation_log or {}
    errors = operation_log.get('errors', [])
    run_log = RunLog(
        command=command,
        status=status or run_status(operation_log),
        total_processed=operation_log.get('total_processed', 0),
        successful=operation_log.get('successful', 0),
        failed=operation_log.get('failed', 0),
        errors=errors,
        non_converged=[error['index'] for error in errors if error.get('type') == 'non_convergence'],
        seed=seed,
        jobs=jobs,
        config_hash=config_hash,
        artifact=str(artifact),
        duration=duration,
    )
    try:
        run_log.save()
    except DatabaseError as e:
        logger.warning(f'Run of {command} not recorded: {e}. Apply migrations to keep run records')
        return None
    return run_log
