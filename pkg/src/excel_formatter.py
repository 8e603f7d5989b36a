"""
Excel格式美化模块 - 负责率失真曲线报表的格式美化与导出
"""

import math
import os
import tempfile
from typing import Sequence

from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from rd_curve import CSV_COLUMNS, RdCurve


class ExcelFormatter:
    """Excel格式美化器类"""

    def __init__(self):
        """初始化格式美化器"""
        self.colors = {
            'header_bg': 'FF1F4E79',    # 深蓝色背景
            'header_font': 'FFFFFFFF',  # 白色字体
            'failed_bg': 'FFF8CBAD',    # 失败点浅红色背景
            'even_row_bg': 'FFDDEBF7',
            'odd_row_bg': 'FFFFFFFF',
            'data_font': 'FF000000',
            'border': 'FF000000'
        }

        self.fonts = {
            'header': Font(name='微软雅黑', size=12, bold=True, color=self.colors['header_font']),
            'data': Font(name='微软雅黑', size=10, color=self.colors['data_font']),
        }

        self.fills = {
            'header': PatternFill(start_color=self.colors['header_bg'], end_color=self.colors['header_bg'], fill_type='solid'),
            'failed': PatternFill(start_color=self.colors['failed_bg'], end_color=self.colors['failed_bg'], fill_type='solid'),
            'even_row': PatternFill(start_color=self.colors['even_row_bg'], end_color=self.colors['even_row_bg'], fill_type='solid'),
            'odd_row': PatternFill(start_color=self.colors['odd_row_bg'], end_color=self.colors['odd_row_bg'], fill_type='solid')
        }

        thin_border = Side(border_style='thin', color=self.colors['border'])
        self.border = Border(left=thin_border, right=thin_border, top=thin_border, bottom=thin_border)

        self.alignments = {
            'center': Alignment(horizontal='center', vertical='center'),
            'right': Alignment(horizontal='right', vertical='center'),
        }

        # distortion, rate_bits, provenance, n, params_digest
        self.column_widths = [18.0, 14.0, 12.0, 10.0, 20.0]

    def format_header_row(self, worksheet, header_row=1):
        """
        格式化标题行

        Args:
            worksheet: Excel工作表对象
            header_row: 标题行号（默认为1）
        """
        for col in range(1, worksheet.max_column + 1):
            cell = worksheet.cell(row=header_row, column=col)
            cell.font = self.fonts['header']
            cell.fill = self.fills['header']
            cell.alignment = self.alignments['center']
            cell.border = self.border
        worksheet.freeze_panes = worksheet.cell(row=header_row + 1, column=1)

    def format_data_rows(self, worksheet, start_row=2):
        """
        格式化数据行；码率为空（失败点）的行标红

        Args:
            worksheet: Excel工作表对象
            start_row: 数据开始行号（默认为2）
        """
        for row in range(start_row, worksheet.max_row + 1):
            failed = worksheet.cell(row=row, column=2).value is None
            fill = self.fills['failed'] if failed else self.fills['even_row' if row % 2 == 0 else 'odd_row']
            for col in range(1, worksheet.max_column + 1):
                cell = worksheet.cell(row=row, column=col)
                cell.font = self.fonts['data']
                cell.fill = fill
                cell.border = self.border
                cell.alignment = self.alignments['right'] if col in (1, 2, 4) else self.alignments['center']
                if col in (1, 2):
                    cell.number_format = '0.000000'

    def adjust_column_widths(self, worksheet):
        for col, width in enumerate(self.column_widths, 1):
            worksheet.column_dimensions[get_column_letter(col)].width = width
        worksheet.row_dimensions[1].height = 22

    def format_worksheet(self, worksheet):
        """
        完整格式化工作表

        Args:
            worksheet: Excel工作表对象
        """
        self.adjust_column_widths(worksheet)
        self.format_header_row(worksheet)
        self.format_data_rows(worksheet)
        worksheet.print_area = f'A1:{get_column_letter(worksheet.max_column)}{worksheet.max_row}'

    def write_curve_sheet(self, workbook, curve: RdCurve, title: str):
        """把一条曲线写成一个工作表"""
        worksheet = workbook.create_sheet(title=title[:31])
        worksheet.append(CSV_COLUMNS)
        for point in curve.sorted().points:
            rate = None if math.isnan(point.rate_bits) else point.rate_bits
            worksheet.append([point.distortion, rate, point.provenance, point.n, point.params_digest])
        self.format_worksheet(worksheet)
        return worksheet


def export_curves_xlsx(curves: Sequence[RdCurve], path: str):
    """
    每条曲线一个工作表（以 provenance 命名，重名时追加序号），写入后原子替换

    Args:
        curves: 曲线列表
        path: 输出 .xlsx 路径
    """
    formatter = ExcelFormatter()
    workbook = Workbook()
    workbook.remove(workbook.active)
    used = {}
    for curve in curves:
        used[curve.provenance] = used.get(curve.provenance, 0) + 1
        title = curve.provenance if used[curve.provenance] == 1 else f"{curve.provenance}_{used[curve.provenance]}"
        formatter.write_curve_sheet(workbook, curve, title)
    if not curves:
        workbook.create_sheet(title="empty")

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp_", suffix=".xlsx", dir=directory)
    os.close(fd)
    try:
        workbook.save(tmp_path)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    print(f"💾 曲线报表已保存至: {path}")
