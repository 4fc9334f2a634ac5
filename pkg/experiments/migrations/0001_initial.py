# Generated by Django 6.0.2 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('subcommand', models.CharField(db_index=True, max_length=32, verbose_name='Subcommand')),
                ('arguments', models.JSONField(default=dict, verbose_name='Resolved options')),
                ('seed', models.BigIntegerField(blank=True, null=True, verbose_name='Seed')),
                ('summary', models.TextField(blank=True, verbose_name='Summary line')),
                ('outputs', models.JSONField(default=list, verbose_name='Output paths')),
                ('status', models.CharField(choices=[('succeeded', 'Succeeded'), ('invalid', 'Invalid input'), ('failed', 'Failed')], default='succeeded', max_length=16, verbose_name='Status')),
                ('duration_seconds', models.FloatField(default=0.0, verbose_name='Duration (s)')),
                ('created_at', models.DateTimeField(auto_now_add=True, verbose_name='Created at')),
            ],
            options={
                'verbose_name': 'Experiment run',
                'verbose_name_plural': 'Experiment runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
