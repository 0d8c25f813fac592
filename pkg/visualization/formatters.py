"""
점수 및 시간 포맷팅 유틸리티
"""
import math


def format_score(mean: float, std: float, decimals: int = 1) -> str:
    """
    점수 셀 포맷팅

    Args:
        mean: 평균
        std: 표준편차
        decimals: 소수점 자릿수

    Returns:
        포맷팅된 문자열 (예: '20.0 ± 8.2')
    """
    if math.isnan(mean):
        return "n/a"
    std = 0.0 if math.isnan(std) else std
    return f"{mean:.{decimals}f} ± {std:.{decimals}f}"


def format_seconds(value: float) -> str:
    """
    실행 시간 포맷팅

    Returns:
        포맷팅된 문자열 (예: '42.0s', '3m 05s')
    """
    if value < 60:
        return f"{value:.1f}s"
    minutes, seconds = divmod(int(round(value)), 60)
    return f"{minutes}m {seconds:02d}s"


def format_fraction(value) -> str:
    """Fraction → '5/18 (0.2778)'"""
    return f"{value.numerator}/{value.denominator} ({float(value):.4f})"
