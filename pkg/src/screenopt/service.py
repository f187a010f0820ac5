"""HTTP facade over the screening toolkit.

Every computation the CLI offers is exposed as a POST endpoint taking the
problem instance inline, so the service stays stateless: identical requests
produce identical responses. Run it with `uvicorn screenopt.service:app`.
"""

from __future__ import annotations

from typing import Any, Literal, Optional, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .assumptions import validate_assumptions
from .checks import check_report_to_dict, run_menu_checks
from .errors import InstanceSchemaError, ScreenoptError
from .formats import (
    _plain,
    assumption_report_to_dict,
    build_instance_from_dict,
    solve_report_to_dict,
)
from .gconvex import Menu, MenuItem
from .model import ProblemInstance
from .oracle import OracleConfig, solve_bruteforce
from .solver import SolveConfig, solve


# --- request/response schemas ------------------------------------------------

class GridAxis(BaseModel):
    min: float
    max: float
    count: int


class BoxAxis(BaseModel):
    min: float
    max: float


class AgentsSection(BaseModel):
    points: Optional[list[list[float]]] = None
    grid: Optional[list[GridAxis]] = None
    weights: Union[list[float], Literal["uniform"], None] = None


class UtilitySection(BaseModel):
    family: str
    params: dict[str, Any] = Field(default_factory=dict)


class ProfitSection(BaseModel):
    expression: str
    params: dict[str, Any] = Field(default_factory=dict)
    lower_bound: float
    joint_bound_c0: Optional[float] = None


class PricesSection(BaseModel):
    z_lower: float
    z_upper: Union[float, str]
    numeric_cap: Optional[float] = None


class OutsideSection(BaseModel):
    y_null: list[float]
    z_null: float


class InstancePayload(BaseModel):
    agents: AgentsSection
    utility: UtilitySection
    profit: ProfitSection
    prices: PricesSection
    outside: OutsideSection
    product_box: list[BoxAxis]

    def to_instance(self) -> ProblemInstance:
        data = self.model_dump(exclude_none=True)
        try:
            return build_instance_from_dict(data)
        except InstanceSchemaError as exc:
            raise HTTPException(
                status_code=422,
                detail={"kind": "schema", "key": exc.key, "message": str(exc)},
            ) from exc


class MenuItemPayload(BaseModel):
    product: list[float]
    price: float
    is_null: bool = False

    def to_item(self) -> MenuItem:
        return MenuItem(self.product, self.price, is_null=self.is_null)


class SolveConfigPayload(BaseModel):
    seed: int = 0
    max_iters: int = 2000
    restarts: int = 1
    menu_size: int = 2
    init_scheme: str = "random-in-box"
    warm_start_menu: Optional[list[MenuItemPayload]] = None
    product_step: Optional[float] = None
    price_step: Optional[float] = None
    shrink_factor: float = 0.5
    min_step: float = 1e-6
    anneal_enabled: bool = False
    anneal_temp0: float = 1.0
    anneal_cooling: float = 0.95
    tol_profit: float = 0.0

    def to_config(self) -> SolveConfig:
        warm = None
        if self.warm_start_menu is not None:
            warm = Menu(tuple(item.to_item() for item in self.warm_start_menu))
        return SolveConfig(
            seed=self.seed,
            max_iters=self.max_iters,
            restarts=self.restarts,
            menu_size=self.menu_size,
            init_scheme=self.init_scheme,
            warm_start_menu=warm,
            product_step=self.product_step,
            price_step=self.price_step,
            shrink_factor=self.shrink_factor,
            min_step=self.min_step,
            anneal_enabled=self.anneal_enabled,
            anneal_temp0=self.anneal_temp0,
            anneal_cooling=self.anneal_cooling,
            tol_profit=self.tol_profit,
        )


class OracleConfigPayload(BaseModel):
    product_grid: Optional[list[GridAxis]] = None
    price_grid: Optional[GridAxis] = None
    max_menu_size: int = 2

    def to_config(self, instance: ProblemInstance) -> OracleConfig:
        if self.product_grid is None:
            product_grid = tuple(
                (float(lo), float(hi), 9) for lo, hi in instance.product_box)
        else:
            product_grid = tuple((ax.min, ax.max, ax.count) for ax in self.product_grid)
        if self.price_grid is None:
            price_grid = (instance.prices.z_lower, instance.prices.cap, 21)
        else:
            price_grid = (self.price_grid.min, self.price_grid.max, self.price_grid.count)
        return OracleConfig(product_grid=product_grid, price_grid=price_grid,
                            max_menu_size=self.max_menu_size)


class ValidateRequest(BaseModel):
    instance: InstancePayload
    sample_count: int = 1000
    seed: int = 0
    workers: int = 1


class SolveRequest(BaseModel):
    instance: InstancePayload
    config: SolveConfigPayload = Field(default_factory=SolveConfigPayload)
    workers: int = 1


class OracleRequest(BaseModel):
    instance: InstancePayload
    config: OracleConfigPayload = Field(default_factory=OracleConfigPayload)
    workers: int = 1


class CheckRequest(BaseModel):
    instance: InstancePayload
    menu: list[MenuItemPayload]


class AssumptionEntry(BaseModel):
    status: str
    detail: str
    witness: Optional[list[Any]] = None


class ValidateResponse(BaseModel):
    assumptions: dict[str, AssumptionEntry]
    constants: dict[str, Any]
    sample_count: int
    seed: int
    all_pass: bool


class MenuItemOut(BaseModel):
    product: list[float]
    price: float
    is_null: bool


class AllocationRowOut(BaseModel):
    agent_index: int
    item: int
    product: list[float]
    price: float
    utility: float
    profit_contrib: float


class SolveResponse(BaseModel):
    best_profit: float
    menu: list[MenuItemOut]
    allocation: list[AllocationRowOut]
    profit_trace: list[tuple[int, float]]
    termination: str
    boundary_hits: list[int]
    seed: int


class CheckRowOut(BaseModel):
    name: str
    status: str
    detail: str
    witness: Optional[list[Any]] = None


class CheckResponse(BaseModel):
    checks: list[CheckRowOut]
    passed: bool


class HealthResponse(BaseModel):
    status: str
    tool: str
    version: str


def _domain_error(exc: ScreenoptError) -> HTTPException:
    return HTTPException(
        status_code=400,
        detail={"kind": "domain", "error": type(exc).__name__, "message": str(exc)},
    )


def create_app() -> FastAPI:
    app = FastAPI(title="screenopt", version=__version__,
                  description="Discretized multidimensional screening solver")

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", tool="screenopt", version=__version__)

    @app.post("/validate", response_model=ValidateResponse)
    def validate(request: ValidateRequest) -> ValidateResponse:
        instance = request.instance.to_instance()
        if request.sample_count < 100:
            raise HTTPException(status_code=422, detail={
                "kind": "schema", "key": "sample_count",
                "message": "sample_count must be at least 100"})
        report = validate_assumptions(instance, request.sample_count, request.seed,
                                      workers=request.workers)
        return ValidateResponse(**_plain(assumption_report_to_dict(report)))

    @app.post("/solve", response_model=SolveResponse)
    def run_solve(request: SolveRequest) -> SolveResponse:
        instance = request.instance.to_instance()
        try:
            config = request.config.to_config()
            report = solve(instance, config, workers=request.workers)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail={
                "kind": "schema", "key": "config", "message": str(exc)}) from exc
        except ScreenoptError as exc:
            raise _domain_error(exc) from exc
        return SolveResponse(**_plain(solve_report_to_dict(report)))

    @app.post("/oracle", response_model=SolveResponse)
    def run_oracle(request: OracleRequest) -> SolveResponse:
        instance = request.instance.to_instance()
        try:
            config = request.config.to_config(instance)
            report = solve_bruteforce(instance, config, workers=request.workers)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail={
                "kind": "schema", "key": "config", "message": str(exc)}) from exc
        except ScreenoptError as exc:
            raise _domain_error(exc) from exc
        return SolveResponse(**_plain(solve_report_to_dict(report)))

    @app.post("/check", response_model=CheckResponse)
    def run_check(request: CheckRequest) -> CheckResponse:
        instance = request.instance.to_instance()
        items = [item.to_item() for item in request.menu]
        if not items:
            raise HTTPException(status_code=422, detail={
                "kind": "schema", "key": "menu", "message": "menu must contain at least one item"})
        try:
            report = run_menu_checks(instance, items)
        except ScreenoptError as exc:
            raise _domain_error(exc) from exc
        return CheckResponse(**_plain(check_report_to_dict(report)))

    return app


app = create_app()
