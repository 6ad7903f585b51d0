"""
Settings Provider

Usage:

1) Instantiate the SettingsProvider, passing whatever the command line gave

    provider = SettingsProvider(outdir=args.outdir, log_level=args.log_level)

2) Call the load_settings() method

    settings = provider.load_settings()

3) Use the returned object

    print(settings.outdir, settings.sources)
    logging.basicConfig(level=settings.log_level)

"""
import logging
import os
from typing import Dict, Optional, Tuple


class Settings:
    """
    Resolved runtime settings. Remembers where each value came from so that
    the manifest can echo it.
    """
    def __init__(self,
                 outdir: str,
                 log_level: str,
                 sources: Dict[str, str]):
        self._outdir = outdir
        self._log_level = log_level
        self._sources = dict(sources)

    @property
    def outdir(self) -> str:
        return self._outdir

    @property
    def log_level(self) -> int:
        return logging.getLevelName(self._log_level)

    @property
    def log_level_name(self) -> str:
        return self._log_level

    @property
    def sources(self) -> Dict[str, str]:
        return dict(self._sources)

    def __repr__(self):
        return (
            f'[[[ habitat_rd settings, outdir={self._outdir} '
            f'({self._sources["outdir"]}) ]]]'
        )

    def __str__(self):
        return self.__repr__()


class SettingsProvider:
    OUTDIR_ENV = 'RD_OUTDIR'
    LOG_LEVEL_ENV = 'RD_LOG_LEVEL'
    DEFAULT_OUTDIR = 'rd_output'
    DEFAULT_LOG_LEVEL = 'INFO'
    KNOWN_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

    def __init__(self,
                 outdir: Optional[str] = None,
                 log_level: Optional[str] = None):
        self._outdir = outdir
        self._log_level = log_level

    def load_settings(self) -> Settings:
        """
        Returns the Settings object. Each value is looked up on the command
        line first, then in the environment, then falls back to the default.
        """
        outdir, outdir_source = self._resolve(
            self._outdir,
            self.OUTDIR_ENV,
            self.DEFAULT_OUTDIR,
        )
        level, level_source = self._resolve(
            self._log_level,
            self.LOG_LEVEL_ENV,
            self.DEFAULT_LOG_LEVEL,
        )
        level = self._normalize_level(level)

        return Settings(
            outdir,
            level,
            {'outdir': outdir_source, 'log_level': level_source},
        )

    @classmethod
    def _resolve(cls,
                 explicit: Optional[str],
                 env_name: str,
                 default: str) -> Tuple[str, str]:
        if explicit:
            return explicit, 'command line'

        # Empty environment values count as unset.
        from_env = cls._load_env(env_name)
        if from_env:
            return from_env, f'env {env_name}'

        return default, 'default'

    @staticmethod
    def _load_env(env_name: str) -> Optional[str]:
        value = os.environ.get(env_name)
        if not value:
            return None
        return value.strip()

    @classmethod
    def _normalize_level(cls, level: str) -> str:
        level = level.upper()
        if level not in cls.KNOWN_LEVELS:
            logging.warning(
                'Unknown log level %s, using %s',
                level,
                cls.DEFAULT_LOG_LEVEL,
            )
            return cls.DEFAULT_LOG_LEVEL
        return level
