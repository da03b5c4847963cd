#!/usr/bin/env python3
# -*- coding: utf-8 -*-

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Sequence, Union

from . import log


class BatchRequest:
    def __init__(self, func: Callable, args: Any = (), **kwargs: dict) -> None:
        """Constructor object for one unit of parallel work.

        Used to pass multiple calls into batch_run for parallel execution.

        Args:
            func (callable): The function to execute.
            args (Any, optional): args passed on to func. Defaults to ().
            kwargs (dict, optional): kwargs passed on to func. Defaults to {}.
        """
        self.func = func
        self.args: Union[list, tuple] = args if isinstance(args, (list, tuple)) else (args, )
        self.kwargs = kwargs

    def __call__(self) -> Any:
        return self.func(*self.args, **self.kwargs)

    def __repr__(self) -> str:
        return f"<BatchRequest {getattr(self.func, '__name__', self.func)} args={len(self.args)}>"


def batch_run(requests: Sequence[BatchRequest], threads: int = 1) -> List[Any]:
    """Run requests and return their results in request order.

    ``threads=1`` runs inline.  Results never depend on the thread count since
    every request is independent and the output order is the input order.
    """
    requests = list(requests)
    if threads <= 1 or len(requests) <= 1:
        return [r() for r in requests]

    workers = min(threads, len(requests))
    log.debugv(f"batch_run: {len(requests)} requests on {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(r) for r in requests]
        return [f.result() for f in futures]


def chunked(n: int, parts: int) -> List[slice]:
    """Split range(n) into at most ``parts`` contiguous slices."""
    parts = max(1, min(parts, n)) if n else 1
    bounds = [round(i * n / parts) for i in range(parts + 1)]
    return [slice(bounds[i], bounds[i + 1]) for i in range(parts)]
