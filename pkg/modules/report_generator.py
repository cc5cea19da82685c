"""
Report Generator Module
Generate Excel workbooks from scan results.
"""
import re
from typing import List, Optional

import openpyxl
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from modules.scan import CSV_COLUMNS, ScanResult


class ReportError(Exception):
    """Custom exception for report generation errors"""
    pass


HEADER_FILL = "D3D3D3"
SUMMARY_KEYS = [
    "slope_lower", "slope_upper", "r2_lower", "r2_upper", "expected_exponent",
    "slope_floor", "log_slope_lower", "log_r2_lower", "cap_ratio", "consistent",
]
MAX_SHEET_NAME = 31


def sheet_title(name: str, taken: List[str]) -> str:
    """Excel-safe, unique sheet title."""
    title = re.sub(r"[\[\]:*?/\\]", "_", name)[:MAX_SHEET_NAME]
    candidate, counter = title, 2
    while candidate in taken or candidate == "Summary":
        suffix = f"_{counter}"
        candidate = title[:MAX_SHEET_NAME - len(suffix)] + suffix
        counter += 1
    return candidate


def create_scan_workbook(results: List[ScanResult], output_path: Optional[str] = None) -> openpyxl.Workbook:
    """
    Create a workbook with one sheet per scan and a Summary sheet.

    Args:
        results: Fitted scan results
        output_path: Optional path to save the workbook

    Returns:
        openpyxl.Workbook object

    Raises:
        ReportError: If there is nothing to write or saving fails
    """
    if not results:
        raise ReportError("No scan results to write")
    wb = openpyxl.Workbook()
    if "Sheet" in wb.sheetnames:
        wb.remove(wb["Sheet"])

    for result in results:
        create_scan_sheet(wb, result)
    create_summary_sheet(wb, results)

    if output_path:
        try:
            wb.save(output_path)
        except OSError as e:
            raise ReportError(f"Cannot save workbook {output_path}: {e}")
    return wb


def _write_header(ws, headers: List[str]):
    ws.append(headers)
    for col_num in range(1, len(headers) + 1):
        cell = ws.cell(1, col_num)
        cell.font = Font(bold=True)
        cell.alignment = Alignment(horizontal="center", vertical="center")
        cell.fill = PatternFill(start_color=HEADER_FILL, end_color=HEADER_FILL, fill_type="solid")


def create_scan_sheet(wb: openpyxl.Workbook, result: ScanResult):
    """One row per lambda, columns as in the CSV output."""
    ws = wb.create_sheet(title=sheet_title(result.entry_name, wb.sheetnames))
    _write_header(ws, CSV_COLUMNS)
    for row in result.rows:
        ws.append([row.lam, row.lower, row.upper, row.rho0, row.witness_id, row.method])
    format_sheet(ws)


def create_summary_sheet(wb: openpyxl.Workbook, results: List[ScanResult]):
    ws = wb.create_sheet(title="Summary")
    _write_header(ws, ["entry", "method"] + SUMMARY_KEYS)
    for result in results:
        summary = result.summary()
        ws.append([result.entry_name, result.method] + [summary.get(key) for key in SUMMARY_KEYS])
    format_sheet(ws)


def format_sheet(ws):
    """Column widths, borders and 9-significant-digit number format."""
    ws.column_dimensions["A"].width = 24
    for col in range(2, ws.max_column + 1):
        ws.column_dimensions[get_column_letter(col)].width = 16

    thin_border = Border(
        left=Side(style="thin"),
        right=Side(style="thin"),
        top=Side(style="thin"),
        bottom=Side(style="thin"),
    )
    for row in ws.iter_rows(min_row=1, max_row=ws.max_row, min_col=1, max_col=ws.max_column):
        for cell in row:
            cell.border = thin_border
            if isinstance(cell.value, float):
                cell.number_format = "0.00000000E+00"
